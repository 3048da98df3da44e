#include "pemreg/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "pemreg/error.hpp"

namespace pemreg {

ForecastMode parse_forecast_mode(const std::string& s) {
  if (s == "perfect") return ForecastMode::perfect;
  if (s == "ar") return ForecastMode::ar;
  if (s == "delay" || s == "delay-precompensator") return ForecastMode::delay;
  if (s == "passthrough") return ForecastMode::passthrough;
  throw InputError("unknown forecast mode '" + s + "'");
}

std::string to_string(ForecastMode m) {
  switch (m) {
    case ForecastMode::perfect: return "perfect";
    case ForecastMode::ar: return "ar";
    case ForecastMode::delay: return "delay";
    case ForecastMode::passthrough: return "passthrough";
  }
  return "?";
}

void MpcConfig::validate() const {
  if (p != 1 && p != 2) throw InputError("mpc: norm must be 1 or 2");
  if (T_d < 0) throw InputError("mpc: T_d must be nonnegative");
  if (horizon <= T_d) throw InputError("mpc: horizon must exceed T_d");
  if (!(kkt_tol > 0.0)) throw InputError("mpc: kkt_tol must be positive");
}

MpcProblem assemble(const LinModel& lin, std::span<const double> R, const MpcConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(cfg.horizon);
  if (static_cast<Eigen::Index>(R.size()) != n)
    throw InputError("assemble: reference window has " + std::to_string(R.size()) +
                     " samples, horizon is " + std::to_string(n));
  const Eigen::Index K = lin.A.rows();
  if (lin.B.size() != K || lin.C.size() != K || lin.Cm.size() != K || lin.x0.size() != K ||
      lin.f0.size() != K)
    throw InputError("assemble: linear model dimensions disagree");

  const Eigen::RowVectorXd pCm = lin.p_rate * lin.Cm;
  Eigen::VectorXd h(n), g(n);
  MpcProblem prob;
  prob.p = cfg.p;
  prob.G_y.resize(n);
  prob.G_u2 = Eigen::VectorXd::Zero(n);

  Eigen::VectorXd a = lin.B;
  Eigen::VectorXd v = lin.f0 - lin.x0;
  Eigen::VectorXd S = v;
  for (Eigen::Index i = 0; i < n; ++i) {
    h[i] = lin.C.dot(a);
    g[i] = pCm.dot(a);
    prob.G_y[i] = lin.C.dot(S);
    if (i + 1 < n) prob.G_u2[i + 1] = pCm.dot(S);
    if (i + 1 < n) {
      a = lin.apply_A(a);
      v = lin.apply_A(v);
      S += v;
    }
  }

  prob.M_y = Eigen::MatrixXd::Zero(n, n);
  prob.M_u = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    prob.M_u(i, i) = -1.0;
    for (Eigen::Index j = 0; j <= i; ++j) {
      prob.M_y(i, j) = h[i - j];
      if (j < i) prob.M_u(i, j) = g[i - 1 - j];
    }
  }
  prob.G_u1 = Eigen::VectorXd::Constant(n, lin.u0 - pCm.dot(lin.x0));
  prob.R = Eigen::Map<const Eigen::VectorXd>(R.data(), n);
  prob.Y0 = Eigen::VectorXd::Constant(n, lin.y0);
  return prob;
}

double KktResiduals::max() const {
  return std::max({stationarity, primal, dual, complementarity, subgradient});
}

Solution solve(const MpcProblem& prob, int p, const SolverOptions& opt,
               const std::vector<int>& warm, double kkt_tol) {
  if (p != 1 && p != 2) throw InputError("solve: norm must be 1 or 2");
  const Eigen::Index n = prob.R.size();
  if (prob.M_y.rows() != n || prob.M_y.cols() != n || prob.M_u.rows() != n ||
      prob.M_u.cols() != n || prob.G_y.size() != n || prob.G_u1.size() != n ||
      prob.G_u2.size() != n || prob.Y0.size() != n)
    throw InputError("solve: problem dimensions disagree");
  for (Eigen::Index i = 0; i < n; ++i)
    if (prob.M_u(i, i) >= 0.0) throw InputError("solve: M_u must have a negative diagonal");

  const Eigen::MatrixXd Minv =
      prob.M_u.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd D = -prob.M_y * Minv;
  const Eigen::VectorXd G = prob.G_u1 - prob.G_u2;
  const Eigen::VectorXd c = prob.Y0 + prob.G_y - prob.R - D * G;

  Solution sol;
  Eigen::VectorXd mult;  // 1-norm subgradient
  if (p == 2) {
    NnlsResult r = nnls(D, c, warm, opt);
    sol.slack = r.s;
    sol.status = r.status;
    sol.iterations = r.iterations;
    sol.passive = std::move(r.passive);
  } else {
    L1Result r = nonneg_l1(D, c, opt);
    sol.slack = r.s;
    sol.status = r.status;
    sol.iterations = r.iterations;
    mult = -r.dual;
  }
  sol.dU = Minv * (G - sol.slack);
  const Eigen::VectorXd e = prob.Y0 + prob.M_y * sol.dU + prob.G_y - prob.R;
  sol.objective = p == 2 ? e.squaredNorm() : e.lpNorm<1>();

  // KKT conditions of the original problem in dU.
  const Eigen::VectorXd grad = p == 2 ? Eigen::VectorXd(2.0 * prob.M_y.transpose() * e)
                                      : Eigen::VectorXd(prob.M_y.transpose() * mult);
  const Eigen::VectorXd lambda = -Minv.transpose() * grad;
  KktResiduals& k = sol.kkt;
  k.stationarity = (grad + prob.M_u.transpose() * lambda).lpNorm<Eigen::Infinity>();
  const Eigen::VectorXd viol = prob.M_u * sol.dU - G;
  k.primal = std::max(0.0, viol.maxCoeff());
  k.dual = std::max(0.0, -lambda.minCoeff());
  k.complementarity = (lambda.array() * sol.slack.array()).abs().maxCoeff();
  if (p == 1) {
    const double etol = 1e-9 * std::max(1.0, prob.R.lpNorm<Eigen::Infinity>());
    for (Eigen::Index i = 0; i < n; ++i) {
      k.subgradient = std::max(k.subgradient, std::abs(mult[i]) - 1.0);
      if (std::abs(e[i]) > etol)
        k.subgradient = std::max(k.subgradient, std::abs(mult[i] - (e[i] > 0 ? 1.0 : -1.0)));
    }
  }
  if (sol.status == SolveStatus::optimal && !(k.max() < kkt_tol))
    sol.status = SolveStatus::iteration_limit;
  return sol;
}

Precompensator::Precompensator(MpcConfig cfg, VbParams vb, std::optional<ArModel> ar)
    : cfg_(cfg), vb_(std::move(vb)), ar_(std::move(ar)) {
  cfg_.validate();
  vb_.validate();
  if (cfg_.forecast == ForecastMode::ar && !ar_)
    throw InputError("precompensator: AR forecast mode needs a fitted model");
}

void Precompensator::prime_pipeline(std::vector<double> queued) {
  if (static_cast<int>(queued.size()) != vb_.input_delay)
    throw InputError("prime_pipeline: expected " + std::to_string(vb_.input_delay) +
                     " queued inputs, got " + std::to_string(queued.size()));
  sent_.assign(queued.begin(), queued.end());
}

std::vector<double> Precompensator::reference_window(std::span<const double> r,
                                                     std::size_t k) const {
  if (r.empty() || k >= r.size()) throw InputError("reference_window: k outside the series");
  const auto n = static_cast<std::ptrdiff_t>(cfg_.horizon);
  const auto kk = static_cast<std::ptrdiff_t>(k);
  const std::ptrdiff_t base = kk + vb_.input_delay - cfg_.T_d;
  const std::ptrdiff_t last = base + n - 1;

  std::vector<double> fc;
  if (cfg_.forecast == ForecastMode::ar && last > kk) {
    const std::size_t order = ar_->order();
    const std::size_t keep = std::min<std::size_t>(k + 1, std::max<std::size_t>(order, 1) * 4);
    if (k + 1 < order) throw InputError("reference_window: not enough history for the AR model");
    fc = forecast(*ar_, r.subspan(k + 1 - keep, keep), static_cast<std::size_t>(last - kk));
  }

  std::vector<double> R(static_cast<std::size_t>(n));
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t idx = base + i;
    double v;
    if (idx <= kk) {
      v = r[static_cast<std::size_t>(std::max<std::ptrdiff_t>(idx, 0))];
    } else if (cfg_.forecast == ForecastMode::ar) {
      v = fc[static_cast<std::size_t>(idx - kk - 1)];
    } else if (cfg_.forecast == ForecastMode::perfect) {
      v = r[std::min(static_cast<std::size_t>(idx), r.size() - 1)];
    } else {
      v = r[k];
    }
    R[static_cast<std::size_t>(i)] = v;
  }
  return R;
}

ControllerOutput Precompensator::step(std::span<const double> r, std::size_t k,
                                      const VbState& observed, double u_prev) {
  ControllerOutput out;
  if (k >= r.size()) throw InputError("precompensator: step index beyond the reference");
  if (cfg_.forecast == ForecastMode::passthrough) {
    out.u = out.u_unclamped = r[k];
    return out;
  }
  if (cfg_.forecast == ForecastMode::delay) {
    out.u = out.u_unclamped = r[k >= static_cast<std::size_t>(cfg_.T_d) ? k - cfg_.T_d : 0];
    return out;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    VbState x = observed;
    double u0 = u_prev;
    for (double queued : sent_) {
      const InputBounds b = feasible_input_bounds(x, vb_);
      const double ua = std::clamp(queued, b.lo, std::max(b.lo, b.hi));
      x = VbState::from_vector(vb_map(x.to_vector(), ua, vb_));
      u0 = queued;
    }
    const LinModel lin = linearize(x, u0, vb_);
    const std::vector<double> R = reference_window(r, k);
    const MpcProblem prob = assemble(lin, R, cfg_);
    Solution sol = solve(prob, cfg_.p, cfg_.solver, warm_, cfg_.kkt_tol);
    out.status = sol.status;
    out.objective = sol.objective;
    out.iterations = sol.iterations;
    if (sol.status == SolveStatus::optimal) {
      warm_ = std::move(sol.passive);
      out.u_unclamped = lin.u0 + sol.dU[0];
      out.u = out.u_unclamped;
      if (cfg_.clamp_to_bounds) {
        const InputBounds b = feasible_input_bounds(x, vb_);
        out.u = std::clamp(out.u, b.lo, std::max(b.lo, b.hi));
      }
    } else {
      warm_.clear();
      out.fallback = true;
      std::ostringstream os;
      os << "step " << k << ": solver status " << to_string(sol.status)
         << ", kkt " << sol.kkt.max() << "; passing the reference through";
      events_.push_back(os.str());
    }
  } catch (const Error& e) {
    warm_.clear();
    out.fallback = true;
    out.status = SolveStatus::infeasible;
    events_.push_back("step " + std::to_string(k) + ": " + e.what() +
                      "; passing the reference through");
  }
  if (out.fallback) {
    ++fallbacks_;
    out.u = out.u_unclamped = r[k];
  }
  out.solve_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  if (vb_.input_delay > 0) {
    sent_.push_back(out.u);
    while (static_cast<int>(sent_.size()) > vb_.input_delay) sent_.pop_front();
  }
  return out;
}

AnticipationReport down_ramp_anticipation_check(std::span<const double> r,
                                                std::span<const double> y_mpc,
                                                std::span<const double> y_base,
                                                double min_drop) {
  if (y_mpc.size() != r.size() || y_base.size() != r.size())
    throw InputError("down_ramp_anticipation_check: series lengths differ");
  AnticipationReport rep;
  std::size_t k = 0;
  while (k + 1 < r.size()) {
    if (!(r[k + 1] < r[k])) {
      ++k;
      continue;
    }
    std::size_t e = k + 1;
    while (e + 1 < r.size() && r[e + 1] < r[e]) ++e;
    const double drop = r[k] - r[e];
    if (drop >= min_drop) {
      RampSegment seg{k, e, drop, false, false};
      for (std::size_t i = k; i <= e; ++i) {
        seg.mpc_crosses = seg.mpc_crosses || y_mpc[i] < r[i];
        seg.baseline_crosses = seg.baseline_crosses || y_base[i] < r[i];
      }
      rep.mpc_crossings += seg.mpc_crosses ? 1 : 0;
      rep.baseline_crossings += seg.baseline_crosses ? 1 : 0;
      rep.segments.push_back(seg);
    }
    k = e;
  }
  return rep;
}

}  // namespace pemreg
