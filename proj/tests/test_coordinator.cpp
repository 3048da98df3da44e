#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "pemreg/coordinator.hpp"
#include "pemreg/error.hpp"

using namespace pemreg;

namespace {

std::vector<PacketRequest> requests(std::size_t n, double p = 4.5) {
  std::vector<PacketRequest> r;
  for (std::size_t i = 0; i < n; ++i) r.push_back({i * 3, 0, p});
  return r;
}

}  // namespace

TEST(PacketPolicy, ValidatesGridAndWidth) {
  PacketPolicy p;
  EXPECT_NO_THROW(p.validate(2.0));
  p.delta_p_s = 181;
  EXPECT_THROW(p.validate(2.0), InputError);
  p.delta_p_s = 180;
  p.delta_a_s = 180;
  EXPECT_THROW(p.validate(2.0), InputError);
  p.delta_a_s = -2;
  EXPECT_THROW(p.validate(2.0), InputError);
  p.delta_a_s = 60;
  EXPECT_EQ(p.mean_steps(2.0), 90);
  EXPECT_EQ(p.half_width_steps(2.0), 30);
  EXPECT_EQ(p.max_steps(2.0), 120);
}

TEST(PacketPolicy, LengthsAreUniformOnTheGrid) {
  PacketPolicy p;
  p.delta_p_s = 180;
  p.delta_a_s = 10;  // 5 steps each side, 11 values
  const CounterRng rng(9, 1);
  std::map<double, int> hist;
  const int draws = 110000;
  for (int i = 0; i < draws; ++i) ++hist[draw_packet_length(p, 2.0, rng, static_cast<std::uint64_t>(i))];
  ASSERT_EQ(hist.size(), 11u);
  EXPECT_EQ(hist.begin()->first, 170.0);
  EXPECT_EQ(hist.rbegin()->first, 190.0);
  const double expect = draws / 11.0;
  double chi2 = 0.0;
  for (const auto& [len, count] : hist) chi2 += (count - expect) * (count - expect) / expect;
  // 10 degrees of freedom; 29.59 is the 0.999 quantile
  EXPECT_LT(chi2, 29.59);
}

TEST(PacketPolicy, FixedLengthIgnoresTheVariate) {
  PacketPolicy p;
  EXPECT_EQ(packet_steps_from_uniform(p, 2.0, 0.0), 90);
  EXPECT_EQ(packet_steps_from_uniform(p, 2.0, 0.999999), 90);
  p.delta_a_s = 2;
  EXPECT_EQ(packet_steps_from_uniform(p, 2.0, 0.0), 89);
  EXPECT_EQ(packet_steps_from_uniform(p, 2.0, 0.5), 90);
  EXPECT_EQ(packet_steps_from_uniform(p, 2.0, 0.9999999), 91);
}

TEST(Decide, AcceptsGreedilyUpToTheReference) {
  const PacketPolicy pol;
  const CounterRng rng(1, 2);
  for (double ref : {0.0, 100.0, 1000.0, 1003.0, 1004.5, 1044.9, 5000.0}) {
    const auto r = requests(10);
    const DecideResult d = decide(r, ref, 1000.0, {}, pol, 2.0, rng, 3);
    const double room = std::max(0.0, ref - 1000.0);
    const std::size_t want = std::min<std::size_t>(10, static_cast<std::size_t>(std::floor(room / 4.5 + 1e-9)));
    EXPECT_EQ(d.accepted, want) << ref;
    EXPECT_EQ(d.accepted + d.denied, 10u);
    EXPECT_NEAR(d.state.locked_kW, 4.5 * want, 1e-12);
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(d.decisions[i].device, r[i].device);
  }
}

TEST(Decide, ShuffleIsFairAcrossRequests) {
  const PacketPolicy pol;
  const CounterRng rng(5, 7);
  const auto r = requests(8);
  std::vector<int> wins(8, 0);
  const int steps = 8000;
  for (int k = 0; k < steps; ++k) {
    const DecideResult d = decide(r, 4.5, 0.0, {}, pol, 2.0, rng, k);
    ASSERT_EQ(d.accepted, 1u);
    for (std::size_t i = 0; i < 8; ++i) wins[i] += d.decisions[i].accepted;
  }
  double chi2 = 0.0;
  for (int w : wins) chi2 += (w - steps / 8.0) * (w - steps / 8.0) / (steps / 8.0);
  // 7 degrees of freedom; 24.32 is the 0.999 quantile
  EXPECT_LT(chi2, 24.32);
}

TEST(Decide, LedgerReleasesPacketsWhenTheyExpire) {
  PacketPolicy pol;
  pol.delta_p_s = 6;  // 3 steps
  const CounterRng rng(1, 1);
  CoordinatorState st;
  DecideResult d = decide(requests(2), 9.0, 0.0, std::move(st), pol, 2.0, rng, 0);
  st = std::move(d.state);
  EXPECT_DOUBLE_EQ(st.locked_kW, 9.0);
  EXPECT_DOUBLE_EQ(close_step(st), 0.0);
  EXPECT_DOUBLE_EQ(close_step(st), 0.0);
  EXPECT_DOUBLE_EQ(close_step(st), 9.0);
  EXPECT_DOUBLE_EQ(st.locked_kW, 0.0);
  EXPECT_DOUBLE_EQ(close_step(st), 0.0);
}

TEST(Decide, DeviceChosenLengthsAreHonoured) {
  PacketPolicy pol;
  pol.delta_a_s = 20;
  pol.randomize_at = RandomizeAt::device;
  auto r = requests(3);
  r[0].requested_steps = 81;
  r[1].requested_steps = 99;
  r[2].requested_steps = 90;
  const DecideResult d = decide(r, 1e9, 0.0, {}, pol, 2.0, CounterRng(1, 1), 0);
  EXPECT_EQ(d.decisions[0].packet_steps, 81);
  EXPECT_EQ(d.decisions[1].packet_steps, 99);
  EXPECT_EQ(d.decisions[2].packet_steps, 90);
}

TEST(Decide, IsDeterministicInSeedAndStep) {
  PacketPolicy pol;
  pol.delta_a_s = 60;
  const auto r = requests(50);
  const CounterRng rng(77, 3);
  const DecideResult a = decide(r, 100.0, 0.0, {}, pol, 2.0, rng, 12);
  const DecideResult b = decide(r, 100.0, 0.0, {}, pol, 2.0, rng, 12);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_EQ(a.decisions[i].accepted, b.decisions[i].accepted);
    EXPECT_EQ(a.decisions[i].packet_steps, b.decisions[i].packet_steps);
  }
}

TEST(Cycling, ReportsTransitionsPerHour) {
  const std::vector<std::int64_t> s{0, 2, 5}, e{3, 2, 11};
  const CyclingReport r = cycling_report(s, e, 0.5, 6.0);
  EXPECT_DOUBLE_EQ(r.per_device[0], 6.0);
  EXPECT_DOUBLE_EQ(r.per_device[1], 0.0);
  EXPECT_DOUBLE_EQ(r.per_device[2], 12.0);
  EXPECT_DOUBLE_EQ(r.mean, 6.0);
  EXPECT_DOUBLE_EQ(r.relative_to_baseline, 1.0);
  EXPECT_THROW((void)cycling_report(s, std::vector<std::int64_t>{1}, 1.0), InputError);
}
