#include "pemreg/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "pemreg/error.hpp"

namespace pemreg {

namespace {

void check_pair(std::span<const double> r, std::span<const double> y, double r_max, double r_min) {
  if (r.size() != y.size()) throw InputError("tracking error: reference and output lengths differ");
  if (r.empty()) throw InputError("tracking error: empty series");
  if (!(r_max != r_min)) throw InputError("tracking error: r_max equals r_min");
}

template <class F>
double average_over(std::span<const Series> refs, std::span<const Series> outs, F f) {
  if (refs.size() != outs.size()) throw InputError("tracking error: unequal numbers of series");
  if (refs.empty()) throw InputError("tracking error: no series");
  double total = 0.0;
  for (std::size_t i = 0; i < refs.size(); ++i) total += f(refs[i].view(), outs[i].view());
  return total / static_cast<double>(refs.size());
}

}  // namespace

double rmae(std::span<const double> r, std::span<const double> y, double r_max, double r_min) {
  check_pair(r, y, r_max, r_min);
  double s = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) s += std::abs(y[k] - r[k]);
  return s / (static_cast<double>(r.size()) * (r_max - r_min));
}

double rrmse(std::span<const double> r, std::span<const double> y, double r_max, double r_min) {
  check_pair(r, y, r_max, r_min);
  double s = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) s += (y[k] - r[k]) * (y[k] - r[k]);
  return std::sqrt(s / static_cast<double>(r.size())) / (r_max - r_min);
}

double rmae(std::span<const Series> refs, std::span<const Series> outs, double r_max,
            double r_min) {
  return average_over(refs, outs, [&](auto r, auto y) { return rmae(r, y, r_max, r_min); });
}

double rrmse(std::span<const Series> refs, std::span<const Series> outs, double r_max,
             double r_min) {
  return average_over(refs, outs, [&](auto r, auto y) { return rrmse(r, y, r_max, r_min); });
}

Series ramp_limited_basepoint(const Series& r0, std::span<const double> rr10) {
  if (rr10.size() != r0.size()) throw InputError("ramp_limited_basepoint: RR10 length differs");
  Series out = r0;
  for (std::size_t k = 1; k < r0.size(); ++k) {
    if (!(rr10[k] > 0.0)) throw InputError("ramp_limited_basepoint: RR10 must be positive");
    const double prev = out.values[k - 1];
    const double diff = r0[k] - prev;
    if (std::abs(diff) < rr10[k]) out.values[k] = r0[k];
    else out.values[k] = prev + (diff > 0.0 ? rr10[k] : -rr10[k]);
  }
  return out;
}

Series ramp_limited_basepoint(const Series& r0, double rr10) {
  if (!(rr10 > 0.0)) throw InputError("ramp_limited_basepoint: RR10 must be positive");
  return ramp_limited_basepoint(r0, std::vector<double>(r0.size(), rr10));
}

Series to_scoring_grid(const Series& s, double grid_dt) {
  const double q = grid_dt / s.dt;
  const double f = std::round(q);
  if (f < 1.0 || std::abs(q - f) > 1e-9)
    throw InputError("to_scoring_grid: sample period " + std::to_string(s.dt) +
                     " s does not divide " + std::to_string(grid_dt) + " s");
  const auto w = static_cast<std::size_t>(f);
  Series out;
  out.dt = grid_dt;
  out.t0 = s.t0;
  out.unit = s.unit;
  // a trailing partial block is dropped
  for (std::size_t b = 0; b + w <= s.size(); b += w) {
    double sum = 0.0;
    for (std::size_t i = 0; i < w; ++i) sum += s[b + i];
    out.values.push_back(sum / static_cast<double>(w));
  }
  return out;
}

ScoreInputs ScoreInputs::constant(Series r, Series y, double r0, double rr10, double treg,
                                  double areg, double r_max, double r_min) {
  ScoreInputs in;
  const std::size_t n = r.size();
  in.r0 = r;
  std::fill(in.r0.values.begin(), in.r0.values.end(), r0);
  in.r = std::move(r);
  in.y = std::move(y);
  in.rr10.assign(n, rr10);
  in.treg.assign(n, treg);
  in.areg.assign(n, areg);
  in.r_max = r_max;
  in.r_min = r_min;
  return in;
}

ScoreReport pjm_scores(const ScoreInputs& in) {
  const std::size_t need = kScoreSamples + kScoreLookahead;
  const std::size_t len = in.r.size();
  if (in.y.size() != len || in.r0.size() != len || in.rr10.size() != len ||
      in.treg.size() != len || in.areg.size() != len)
    throw InputError("pjm_scores: input series lengths differ");
  if (len < need)
    throw InputError("pjm_scores: need " + std::to_string(need) + " scoring samples (one hour plus " +
                     std::to_string(kScoreLookahead) + " of lookahead), got " +
                     std::to_string(len) + "; pad the run with a longer tail");
  if (!(in.r_max != in.r_min)) throw InputError("pjm_scores: r_max equals r_min");

  const Series r0bar = ramp_limited_basepoint(in.r0, in.rr10);
  std::vector<double> ureg(len), ures(len), x(len);
  for (std::size_t k = 0; k < len; ++k) {
    const double rhat = 2.0 * (in.r[k] - in.r0[k]) / (in.r_max - in.r_min);
    const double treg = in.treg[k];
    ureg[k] = treg != 0.0 ? in.areg[k] / treg * rhat : 0.0;
    ures[k] = in.y[k] - r0bar[k];
    const bool zero_branch = in.branch_as_printed ? treg != 0.0 : treg == 0.0;
    if (zero_branch) {
      x[k] = 0.0;
    } else {
      const double q = rhat / treg;
      x[k] = std::isnan(q) ? 0.0 : std::clamp(q, -1.0, 1.0);
    }
  }

  auto p_del_hat = [](std::size_t m) {
    return std::min(1.0 - (static_cast<double>(m) - 1.0) / 30.0, 1.0);
  };
  constexpr std::size_t W = kCorrWindow;
  constexpr double kSlopeNorm = 2480.0;  // sum of (j - 15)^2 over the window

  ScoreReport rep;
  rep.delay_index.assign(kScoreSamples, -1);
  double prec_sum = 0.0, acc_sum = 0.0, del_sum = 0.0;

  for (std::size_t k = 0; k < kScoreSamples; ++k) {
    const auto rw = std::span<const double>(in.r.values).subspan(k, 61);
    const bool flat = *std::max_element(rw.begin(), rw.end()) ==
                      *std::min_element(rw.begin(), rw.end());
    bool areg_ok = true;
    for (std::size_t j = 0; j <= 30; ++j) areg_ok = areg_ok && in.areg[k + j] != 0.0;

    // precision
    double p_prec = 0.0;
    if (in.treg[k] != 0.0 && !flat && areg_ok) {
      double ubar = 0.0;
      for (std::size_t i = 0; i < kRegMeanWindow; ++i) ubar += std::abs(ureg[k + i]);
      ubar /= static_cast<double>(kRegMeanWindow);
      if (ubar > 0.0)
        p_prec = std::clamp(1.0 - std::abs(ures[k] - ureg[k]) / ubar, 0.0, 1.0);
    }

    // accuracy: correlation or slope surrogate, maximized over the shift
    double xbar = 0.0, v1bar = 0.0;
    for (std::size_t j = 0; j < W; ++j) {
      xbar += x[k + j];
      v1bar += ureg[k + j];
    }
    xbar /= W;
    v1bar /= W;
    double xss = 0.0, slope_num = 0.0, v1ss = 0.0;
    for (std::size_t j = 0; j < W; ++j) {
      const double dx = x[k + j] - xbar;
      xss += dx * dx;
      slope_num += (static_cast<double>(j) - 15.0) * dx;  // k + j - kbar = j - 15
      const double d1 = ureg[k + j] - v1bar;
      v1ss += d1 * d1;
    }
    const double xhat = std::sqrt(xss) / std::sqrt(30.0);
    const double mu_tilde = slope_num / kSlopeNorm;
    const bool use_corr = xhat >= 0.05;

    int best_m = 0;
    double best_obj = -1.0, best_rho = 0.0;
    for (std::size_t m = 0; m <= kMaxShift; ++m) {
      double v2bar = 0.0;
      for (std::size_t j = 0; j < W; ++j) v2bar += ures[k + m + j];
      v2bar /= W;
      double rho;
      if (use_corr) {
        double cross = 0.0, v2ss = 0.0;
        for (std::size_t j = 0; j < W; ++j) {
          const double d2 = ures[k + m + j] - v2bar;
          cross += (ureg[k + j] - v1bar) * d2;
          v2ss += d2 * d2;
        }
        const double den = std::sqrt(v1ss * v2ss);
        rho = den > 0.0 ? cross / den : 0.0;
      } else {
        double s = 0.0;
        for (std::size_t j = 0; j < W; ++j)
          s += (static_cast<double>(j) - 15.0) * (ures[k + m + j] - v2bar);
        rho = 1.0 - std::abs(mu_tilde - s / kSlopeNorm);
      }
      const double obj = std::clamp(rho, 0.0, 1.0) / 3.0 + p_del_hat(m) / 3.0;
      if (obj > best_obj) {
        best_obj = obj;
        best_m = static_cast<int>(m);
        best_rho = rho;
      }
    }
    rep.delay_index[k] = best_m;
    const double p_acc_hat = flat ? 0.0 : std::clamp(best_rho, 0.0, 1.0);
    const bool acc_zero = in.branch_as_printed ? in.treg[k] != 0.0 : in.treg[k] == 0.0;
    const double p_acc = acc_zero ? 0.0 : p_acc_hat;

    double p_del = 0.0;
    if (areg_ok && p_acc_hat != 0.0) p_del = p_del_hat(static_cast<std::size_t>(best_m));

    prec_sum += p_prec;
    acc_sum += p_acc;
    del_sum += p_del;
  }

  rep.precision = prec_sum / kScoreSamples;
  rep.accuracy = acc_sum / kScoreSamples;
  rep.delay = del_sum / kScoreSamples;
  rep.composite = (rep.precision + rep.accuracy + rep.delay) / 3.0;
  const auto rspan = std::span<const double>(in.r.values).first(kScoreSamples);
  const auto yspan = std::span<const double>(in.y.values).first(kScoreSamples);
  rep.rmae = rmae(rspan, yspan, in.r_max, in.r_min);
  rep.rrmse = rrmse(rspan, yspan, in.r_max, in.r_min);
  return rep;
}

}  // namespace pemreg
