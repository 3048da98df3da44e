#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance binary. Nothing here calls into the code it checks, except to
// obtain the quantity being checked.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "pemreg/mpc.hpp"
#include "pemreg/vbmodel.hpp"

namespace oracle {

// Request probability from the rate curve, written from the closed form.
inline double preq(double x1, const pemreg::VbParams& p) {
  if (x1 >= p.z_hi) return 0.0;
  if (x1 <= p.z_lo) return 1.0;
  const double mu =
      p.m_R * (p.z_hi - x1) / (x1 - p.z_lo) * (p.z_set - p.z_lo) / (p.z_hi - p.z_set);
  return 1.0 - std::exp(-mu * p.dt);
}

// Plain transcription of the aggregate update with state
// [x1, x2, x3, z_1 .. z_np].
inline std::vector<double> vb_step(const std::vector<double>& x, double u,
                                   const pemreg::VbParams& p) {
  const std::size_t np = static_cast<std::size_t>(p.n_p);
  const double N = static_cast<double>(p.N);
  const double cap = p.c * p.rho * p.tank_L;
  const double x1 = x[0], x2 = x[1], x3 = x[2];
  const double znp = x[2 + np];
  const double on = x2 + x3 - znp;
  const double count = u / p.p_rate;

  std::vector<double> y(x.size());
  y[0] = x1 - p.dt / p.tau * (x1 - p.x_amb) -
         p.dt / cap * (p.Q_mean - p.p_rate * 1000.0 * (x2 + x3) / N);
  y[1] = count - x3;
  y[2] = (1.0 - p.a2) * x3 + p.a1 * (preq(x1, p) * (N - on) - (count - on));
  y[3] = count - on;
  for (std::size_t i = 2; i <= np; ++i) y[2 + i] = x[2 + i - 1];
  return y;
}

inline double floor_mw(const std::vector<double>& x, const pemreg::VbParams& p) {
  return p.p_rate * (x[1] + x[2] - x[2 + static_cast<std::size_t>(p.n_p)]);
}

inline double ceiling_mw(const std::vector<double>& x, const pemreg::VbParams& p) {
  const double on = x[1] + x[2] - x[2 + static_cast<std::size_t>(p.n_p)];
  return p.p_rate * (on + preq(x[0], p) * (static_cast<double>(p.N) - on));
}

// Random interior aggregate state: temperature inside the deadband, counts
// that keep the on-count between 0 and N.
inline pemreg::VbState random_state(const pemreg::VbParams& p, std::mt19937_64& g) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  pemreg::VbState s;
  s.x1 = p.z_lo + 1.0 + (p.z_hi - p.z_lo - 2.0) * U(g);
  s.z.resize(static_cast<std::size_t>(p.n_p));
  const double per = static_cast<double>(p.N) * 0.5 / p.n_p;
  double sum = 0.0;
  for (auto& z : s.z) {
    z = per * U(g);
    sum += z;
  }
  s.x2 = sum;
  s.x3 = static_cast<double>(p.N) * 0.05 * U(g);
  return s;
}

struct JacobianError {
  double max_rel = 0.0;      // over nonzero analytic entries
  double max_abs_zero = 0.0;  // finite difference where the analytic entry is 0
};

// Central differences of vb_map against linearize at one point.
inline JacobianError jacobian_error(const pemreg::VbState& st, double u,
                                    const pemreg::VbParams& p) {
  const pemreg::LinModel lin = pemreg::linearize(st, u, p);
  const Eigen::VectorXd x = st.to_vector();
  const Eigen::Index K = x.size();
  JacobianError e;
  auto account = [&](double analytic, double fd) {
    if (analytic != 0.0) e.max_rel = std::max(e.max_rel, std::abs(fd - analytic) / std::abs(analytic));
    else e.max_abs_zero = std::max(e.max_abs_zero, std::abs(fd));
  };
  for (Eigen::Index j = 0; j < K; ++j) {
    const double h = j == 0 ? 1e-4 : 1e-1;
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const Eigen::VectorXd d = (pemreg::vb_map(xp, u, p) - pemreg::vb_map(xm, u, p)) / (2.0 * h);
    for (Eigen::Index i = 0; i < K; ++i) account(lin.A(i, j), d[i]);
  }
  const double hu = 1e-3;
  const Eigen::VectorXd du = (pemreg::vb_map(x, u + hu, p) - pemreg::vb_map(x, u - hu, p)) / (2.0 * hu);
  for (Eigen::Index i = 0; i < K; ++i) account(lin.B[i], du[i]);
  return e;
}

// Objective of the prediction problem at dU, or +inf if infeasible.
inline double objective(const pemreg::MpcProblem& pr, const Eigen::VectorXd& dU, int p,
                        double feas_tol = 1e-12) {
  const Eigen::VectorXd viol = pr.M_u * dU - (pr.G_u1 - pr.G_u2);
  if (viol.maxCoeff() > feas_tol) return std::numeric_limits<double>::infinity();
  const Eigen::VectorXd e = pr.Y0 + pr.M_y * dU + pr.G_y - pr.R;
  return p == 2 ? e.squaredNorm() : e.lpNorm<1>();
}

// Small fixed-capacity matrices keep the lattice loop free of allocations.
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1>;

struct LatticeResult {
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd arg;  // dU at the best lattice point
  double spacing = 0.0;
  double box = 0.0;
  double tolerance = 0.0;  // bound on best - optimum from the lattice spacing
};

// Exhaustive search of a uniform lattice. The feasible set of the down-ramp
// rows is parametrized by the nonnegative per-step slack s, with
// dU = M_u^{-1} (G - s), so the lattice covers [0, box]^n. The box comes
// from s = 0 being feasible: any minimizer satisfies ||D s|| <= 2 ||c||.
inline LatticeResult lattice_search(const pemreg::MpcProblem& pr, int p, int points) {
  const int n = pr.n();
  const SmallMat My = pr.M_y;
  const SmallMat Minv = SmallMat(pr.M_u).inverse();
  const SmallVec G = pr.G_u1 - pr.G_u2;
  const SmallVec off = pr.Y0 + pr.G_y - pr.R;
  const SmallMat D = -My * Minv;
  const SmallVec c = off + My * Minv * G;

  const Eigen::MatrixXd Dd = D;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Dd);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  const double f0 = p == 2 ? c.norm() : c.lpNorm<1>();
  // ||D s||_2 <= 2 f0 for p = 2; ||D s||_2 <= ||D s||_1 <= 2 f0 for p = 1
  const double box = 2.0 * f0 / smin * 1.01 + 1e-12;

  LatticeResult res;
  res.box = box;
  res.spacing = box / (points - 1);
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  SmallVec sv(n), dU(n), e(n), best_s(n);
  while (true) {
    for (int i = 0; i < n; ++i) sv[i] = res.spacing * idx[static_cast<std::size_t>(i)];
    dU.noalias() = Minv * (G - sv);
    e.noalias() = My * dU;
    e += off;
    const double f = p == 2 ? e.squaredNorm() : e.lpNorm<1>();
    if (f < res.best) {
      res.best = f;
      best_s = sv;
    }
    int i = 0;
    while (i < n && ++idx[static_cast<std::size_t>(i)] == points) idx[static_cast<std::size_t>(i++)] = 0;
    if (i == n) break;
  }
  res.arg = Eigen::VectorXd(Minv * (G - best_s));

  // the minimizer lies within half a cell (per coordinate) of a lattice point
  const double step = 0.5 * res.spacing * std::sqrt(static_cast<double>(n));
  const double dmove = smax * step;
  if (p == 1) {
    res.tolerance = std::sqrt(static_cast<double>(n)) * dmove;  // ||.||_1 <= sqrt(n) ||.||_2
  } else {
    res.tolerance = 2.0 * std::sqrt(res.best) * dmove + dmove * dmove;
  }
  return res;
}

// Exact minimum of ||D s + c||_1 over s >= 0 by enumerating the vertices of
// the arrangement {s_j = 0} u {(D s + c)_i = 0}; a minimizer of this
// piecewise-linear convex problem is always among them.
inline double l1_vertex_enumeration(const Eigen::MatrixXd& D, const Eigen::VectorXd& c) {
  const int n = static_cast<int>(D.cols());
  const int m = static_cast<int>(D.rows());
  const int h = n + m;
  double best = c.lpNorm<1>();
  std::vector<int> pick(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pick[static_cast<std::size_t>(i)] = i;
  while (true) {
    Eigen::MatrixXd A(n, n);
    Eigen::VectorXd b(n);
    for (int r = 0; r < n; ++r) {
      const int k = pick[static_cast<std::size_t>(r)];
      if (k < n) {
        A.row(r).setZero();
        A(r, k) = 1.0;
        b[r] = 0.0;
      } else {
        A.row(r) = D.row(k - n);
        b[r] = -c[k - n];
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.rank() == n) {
      const Eigen::VectorXd s = lu.solve(b);
      if (s.minCoeff() >= -1e-12) best = std::min(best, (D * s.cwiseMax(0.0) + c).lpNorm<1>());
    }
    int r = n - 1;
    while (r >= 0 && pick[static_cast<std::size_t>(r)] == h - n + r) --r;
    if (r < 0) break;
    ++pick[static_cast<std::size_t>(r)];
    for (int q = r + 1; q < n; ++q) pick[static_cast<std::size_t>(q)] = pick[static_cast<std::size_t>(q - 1)] + 1;
  }
  return best;
}

// Exact minimum of ||D s + c||_2^2 over s >= 0 by enumerating supports.
inline double nnls_support_enumeration(const Eigen::MatrixXd& D, const Eigen::VectorXd& c) {
  const int n = static_cast<int>(D.cols());
  double best = c.squaredNorm();
  for (int mask = 1; mask < (1 << n); ++mask) {
    std::vector<int> idx;
    for (int j = 0; j < n; ++j)
      if (mask & (1 << j)) idx.push_back(j);
    Eigen::MatrixXd Ds(D.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Ds.col(static_cast<Eigen::Index>(k)) = D.col(idx[k]);
    const Eigen::VectorXd s = Ds.colPivHouseholderQr().solve(-c);
    if (s.minCoeff() < 0.0) continue;
    best = std::min(best, (Ds * s + c).squaredNorm());
  }
  return best;
}

// Exact optimum of the prediction problem by enumeration in slack space.
inline double exact_optimum(const pemreg::MpcProblem& pr, int p) {
  const Eigen::MatrixXd Minv = pr.M_u.inverse();
  const Eigen::MatrixXd D = -pr.M_y * Minv;
  const Eigen::VectorXd c = pr.Y0 + pr.G_y - pr.R + pr.M_y * Minv * (pr.G_u1 - pr.G_u2);
  return p == 2 ? nnls_support_enumeration(D, c) : l1_vertex_enumeration(D, c);
}

// Random prediction problem with the structure produced by assemble: lower
// triangular M_y with a positive diagonal, lower triangular M_u with a -1
// diagonal.
inline pemreg::MpcProblem random_problem(int n, int p, std::mt19937_64& g) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  pemreg::MpcProblem pr;
  pr.p = p;
  pr.M_y = Eigen::MatrixXd::Zero(n, n);
  pr.M_u = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    pr.M_y(i, i) = 0.5 + 0.5 * (U(g) + 1.0);
    pr.M_u(i, i) = -1.0;
    for (int j = 0; j < i; ++j) {
      pr.M_y(i, j) = 0.5 * U(g);
      pr.M_u(i, j) = 0.3 * U(g);
    }
  }
  auto vec = [&](double scale) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = scale * U(g);
    return v;
  };
  pr.G_y = vec(0.5);
  pr.G_u1 = vec(1.0);
  pr.G_u2 = vec(0.3);
  pr.R = vec(2.0);
  pr.Y0 = Eigen::VectorXd::Constant(n, 0.5 * U(g));
  return pr;
}

// Prediction problem from the aggregate model itself, on a short horizon.
inline pemreg::MpcProblem vb_problem(int n, int p, std::mt19937_64& g) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  pemreg::VbParams vp;
  vp.N = 200;
  vp.n_p = 3;
  vp.a1 = 0.02;
  vp.a2 = 0.01;
  const pemreg::VbState s = random_state(vp, g);
  const pemreg::InputBounds b = pemreg::feasible_input_bounds(s, vp);
  const double u0 = b.lo + (b.hi - b.lo) * U(g);
  const pemreg::LinModel lin = pemreg::linearize(s, u0, vp);
  std::vector<double> R(static_cast<std::size_t>(n));
  for (auto& r : R) r = lin.y0 + 0.2 * (U(g) - 0.5);
  pemreg::MpcConfig cfg;
  cfg.horizon = n;
  cfg.p = p;
  return pemreg::assemble(lin, R, cfg);
}

// AR(p) realization with unit-variance Gaussian noise after a 1000-sample burn-in.
inline std::vector<double> simulate_ar(const std::vector<double>& phi, double mu, std::size_t n,
                                       std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<double> x(n + 1000, 0.0);
  for (std::size_t k = 0; k < x.size(); ++k) {
    double v = mu + N(g);
    for (std::size_t i = 0; i < phi.size(); ++i)
      if (k > i) v += phi[i] * x[k - 1 - i];
    x[k] = v;
  }
  return {x.begin() + 1000, x.end()};
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / static_cast<double>(a.size());
    mb += b[i] / static_cast<double>(b.size());
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += (a[i] - ma) * (b[i] - mb);
    aa += (a[i] - ma) * (a[i] - ma);
    bb += (b[i] - mb) * (b[i] - mb);
  }
  return ab / std::sqrt(aa * bb);
}

struct DelayScan {
  std::vector<int> n;  // chosen shift per scoring sample
  double delay = 0.0;  // mean delay score
};

// Exhaustive scan over m = 0..30 of the blended correlation/delay objective,
// for 10 s series with constant basepoint r0, TREG = AREG = 1 and
// r_max - r_min = 2, so the regulation request is r - r0. Covers the
// correlation branch only.
inline DelayScan delay_scan(const std::vector<double>& r, const std::vector<double>& y, double r0,
                            std::size_t samples = 360) {
  DelayScan out;
  for (std::size_t k = 0; k < samples; ++k) {
    std::vector<double> reg(31);
    for (std::size_t j = 0; j < 31; ++j) reg[j] = r[k + j] - r0;
    int best = -1;
    double best_obj = -1.0, best_rho = 0.0;
    for (int m = 0; m <= 30; ++m) {
      std::vector<double> res(31);
      for (std::size_t j = 0; j < 31; ++j) res[j] = y[k + static_cast<std::size_t>(m) + j] - r0;
      const double rho = pearson(reg, res);
      const double pd = std::min(1.0 - (m - 1.0) / 30.0, 1.0);
      const double obj = std::clamp(rho, 0.0, 1.0) / 3.0 + pd / 3.0;
      if (obj > best_obj) {
        best_obj = obj;
        best = m;
        best_rho = rho;
      }
    }
    out.n.push_back(best);
    if (std::clamp(best_rho, 0.0, 1.0) != 0.0)
      out.delay += std::min(1.0 - (best - 1.0) / 30.0, 1.0) / static_cast<double>(samples);
  }
  return out;
}

}  // namespace oracle
