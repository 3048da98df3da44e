#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pemreg/error.hpp"
#include "pemreg/scoring.hpp"

using namespace pemreg;

namespace {

constexpr std::size_t kLen = kScoreSamples + kScoreLookahead;
constexpr double kR0 = 3.7;

Series series(std::vector<double> v) {
  Series s;
  s.dt = 10.0;
  s.values = std::move(v);
  return s;
}

// White noise of the given amplitude around r0, inside [r0 - 1, r0 + 1].
std::vector<double> noisy_reference(std::uint64_t seed, double amp) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> U(-amp, amp);
  std::vector<double> r(kLen);
  for (double& v : r) v = kR0 + U(g);
  return r;
}

// With TREG = AREG = 1 and r_max - r_min = 2, the regulation request is r - r0.
std::vector<double> delayed_response(const std::vector<double>& r, std::size_t shift) {
  std::vector<double> y(r.size());
  for (std::size_t k = 0; k < r.size(); ++k) y[k] = k >= shift ? r[k - shift] : kR0;
  return y;
}

ScoreInputs inputs(const std::vector<double>& r, const std::vector<double>& y, double treg = 1.0) {
  return ScoreInputs::constant(series(r), series(y), kR0, 100.0, treg, 1.0, kR0 + 1.0, kR0 - 1.0);
}

}  // namespace

TEST(TrackingError, MatchesHandValues) {
  const std::vector<double> r{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> y{1.0, 3.0, 1.0, 4.0};
  EXPECT_DOUBLE_EQ(rmae(r, y, 5.0, 1.0), 3.0 / (4.0 * 4.0));
  EXPECT_DOUBLE_EQ(rrmse(r, y, 5.0, 1.0), std::sqrt(5.0 / 4.0) / 4.0);
  const std::vector<Series> refs{series(r), series(r)};
  const std::vector<Series> outs{series(y), series(r)};
  EXPECT_DOUBLE_EQ(rmae(refs, outs, 5.0, 1.0), 0.5 * 3.0 / 16.0);
  EXPECT_THROW((void)rmae(r, std::vector<double>{1.0}, 5.0, 1.0), InputError);
  EXPECT_THROW((void)rrmse(r, y, 1.0, 1.0), InputError);
}

TEST(Basepoint, FollowsWithinTheRampLimit) {
  const Series r0 = series({0.0, 1.0, 1.0, 1.0, -0.2, 0.0});
  const Series b = ramp_limited_basepoint(r0, 0.4);
  const std::vector<double> want{0.0, 0.4, 0.8, 1.0, 0.6, 0.2};
  for (std::size_t k = 0; k < want.size(); ++k) EXPECT_NEAR(b[k], want[k], 1e-15);
  EXPECT_THROW((void)ramp_limited_basepoint(r0, 0.0), InputError);
  EXPECT_THROW((void)ramp_limited_basepoint(r0, std::vector<double>{1.0}), InputError);
}

TEST(ScoringGrid, AveragesBlocksAndDropsThePartialTail) {
  Series s;
  s.dt = 2.0;
  s.t0 = 5.0;
  for (int i = 0; i < 12; ++i) s.values.push_back(i);
  const Series g = to_scoring_grid(s);
  EXPECT_EQ(g.dt, 10.0);
  EXPECT_EQ(g.t0, 5.0);
  EXPECT_EQ(g.values, (std::vector<double>{2.0, 7.0}));
  s.dt = 3.0;
  EXPECT_THROW((void)to_scoring_grid(s), InputError);
}

TEST(PjmScores, IdealResponderScoresOne) {
  for (double amp : {0.8, 0.01}) {  // correlation and slope branches
    const auto r = noisy_reference(1, amp);
    const ScoreReport rep = pjm_scores(inputs(r, r));
    EXPECT_DOUBLE_EQ(rep.precision, 1.0) << amp;
    EXPECT_DOUBLE_EQ(rep.accuracy, 1.0) << amp;
    EXPECT_DOUBLE_EQ(rep.delay, 1.0) << amp;
    EXPECT_DOUBLE_EQ(rep.composite, 1.0) << amp;
    EXPECT_EQ(rep.rmae, 0.0);
  }
}

TEST(PjmScores, ZeroTregGivesZeroPrecision) {
  const auto r = noisy_reference(2, 0.8);
  const ScoreReport rep = pjm_scores(inputs(r, r, 0.0));
  EXPECT_EQ(rep.precision, 0.0);
  EXPECT_EQ(rep.accuracy, 0.0);
}

TEST(PjmScores, PrintedBranchZeroesAccuracyWhenTregIsSet) {
  const auto r = noisy_reference(3, 0.8);
  ScoreInputs in = inputs(r, r);
  in.branch_as_printed = true;
  const ScoreReport rep = pjm_scores(in);
  EXPECT_EQ(rep.accuracy, 0.0);
  EXPECT_DOUBLE_EQ(rep.precision, 1.0);
}

TEST(PjmScores, ThirtySecondShiftMatchesTheExhaustiveScan) {
  const auto r = noisy_reference(4, 0.8);
  const auto y = delayed_response(r, 3);
  const ScoreReport rep = pjm_scores(inputs(r, y));
  const oracle::DelayScan want = oracle::delay_scan(r, y, kR0);
  ASSERT_EQ(rep.delay_index.size(), want.n.size());
  for (std::size_t k = 0; k < want.n.size(); ++k) {
    ASSERT_EQ(want.n[k], 3) << "k=" << k;
    EXPECT_EQ(rep.delay_index[k], want.n[k]) << "k=" << k;
  }
  EXPECT_NEAR(want.delay, 28.0 / 30.0, 1e-12);
  EXPECT_NEAR(rep.delay, want.delay, 1e-12);
  EXPECT_NEAR(rep.accuracy, 1.0, 1e-12);
}

TEST(PjmScores, DelayScoreFallsWithTheShiftWhileTheTrueLagWins) {
  // Past some shift a chance correlation at a small lag outscores the
  // penalized true lag; from there only agreement with the scan is checked.
  const auto r = noisy_reference(5, 0.8);
  double prev = 2.0;
  std::size_t first_spurious = 31;
  for (std::size_t s = 0; s <= 30; ++s) {
    const auto y = delayed_response(r, s);
    const ScoreReport rep = pjm_scores(inputs(r, y));
    const oracle::DelayScan want = oracle::delay_scan(r, y, kR0);
    EXPECT_NEAR(rep.delay, want.delay, 1e-12) << "shift " << s;
    bool true_lag = true;
    for (std::size_t k = 0; k < kScoreSamples; ++k) {
      ASSERT_EQ(rep.delay_index[k], want.n[k]) << "shift " << s << " k=" << k;
      true_lag = true_lag && want.n[k] == static_cast<int>(s);
    }
    if (!true_lag) {
      first_spurious = std::min(first_spurious, s);
      continue;
    }
    if (first_spurious <= 30) continue;
    EXPECT_NEAR(rep.delay, std::min(1.0 - (static_cast<double>(s) - 1.0) / 30.0, 1.0), 1e-12);
    EXPECT_LE(rep.delay, prev + 1e-12) << "shift " << s;
    if (s >= 2) EXPECT_LT(rep.delay, prev) << "shift " << s;
    prev = rep.delay;
  }
  EXPECT_GE(first_spurious, 10u);
}

TEST(PjmScores, FuzzedScoresStayInTheUnitInterval) {
  std::mt19937_64 g(6);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 3);
  for (int t = 0; t < 1000; ++t) {
    ScoreInputs in;
    in.r_max = 3.0 + 2.0 * std::abs(U(g));
    in.r_min = in.r_max - 0.1 - 3.0 * std::abs(U(g));
    const double scale = std::pow(10.0, 2.0 * U(g));
    const bool flat = coin(g) == 0;
    std::vector<double> r(kLen), y(kLen), r0(kLen);
    for (std::size_t k = 0; k < kLen; ++k) {
      r[k] = flat ? 3.0 : 3.0 + scale * U(g);
      y[k] = 3.0 + scale * U(g);
      r0[k] = 3.0 + U(g);
      in.rr10.push_back(0.01 + std::abs(U(g)));
      in.treg.push_back(coin(g) == 0 ? 0.0 : std::abs(U(g)) * 2.0);
      in.areg.push_back(coin(g) == 0 ? 0.0 : std::abs(U(g)) * 2.0);
    }
    in.r = series(r);
    in.y = series(y);
    in.r0 = series(r0);
    in.branch_as_printed = t % 2 == 1;
    const ScoreReport rep = pjm_scores(in);
    for (double s : {rep.precision, rep.accuracy, rep.delay, rep.composite}) {
      ASSERT_TRUE(std::isfinite(s)) << "set " << t;
      ASSERT_GE(s, 0.0) << "set " << t;
      ASSERT_LE(s, 1.0) << "set " << t;
    }
    ASSERT_NEAR(rep.composite, (rep.precision + rep.accuracy + rep.delay) / 3.0, 1e-15);
  }
}

TEST(PjmScores, ReportsMissingLookahead) {
  const auto r = noisy_reference(7, 0.5);
  const std::vector<double> short_r(r.begin(), r.begin() + 400);
  try {
    (void)pjm_scores(inputs(short_r, short_r));
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("pad"), std::string::npos);
  }
  ScoreInputs bad = inputs(r, r);
  bad.treg.pop_back();
  EXPECT_THROW((void)pjm_scores(bad), InputError);
}
