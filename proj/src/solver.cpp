#include "pemreg/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pemreg/error.hpp"

namespace pemreg {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::iteration_limit: return "iteration-limit";
  }
  return "?";
}

namespace {

// Solves H_PP z = -g_P on the passive set.
Eigen::VectorXd solve_passive(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                              const std::vector<int>& P) {
  const auto m = static_cast<Eigen::Index>(P.size());
  Eigen::MatrixXd Hp(m, m);
  Eigen::VectorXd rhs(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    rhs[a] = -g[P[a]];
    for (Eigen::Index b = 0; b < m; ++b) Hp(a, b) = H(P[a], P[b]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(Hp);
  if (llt.info() != Eigen::Success) return Eigen::VectorXd::Constant(m, -1.0);
  return llt.solve(rhs);
}

}  // namespace

NnlsResult nnls(const Eigen::MatrixXd& D, const Eigen::VectorXd& c,
                const std::vector<int>& warm_passive, const SolverOptions& opt) {
  if (D.rows() != c.size()) throw InputError("nnls: dimension mismatch");
  const Eigen::Index n = D.cols();
  const Eigen::MatrixXd H = D.transpose() * D;
  const Eigen::VectorXd g = D.transpose() * c;
  const double wtol = opt.tolerance * std::max(1.0, g.lpNorm<Eigen::Infinity>());

  NnlsResult res;
  res.s = Eigen::VectorXd::Zero(n);
  std::vector<char> in_p(static_cast<std::size_t>(n), 0);
  std::vector<int>& P = res.passive;

  if (!warm_passive.empty()) {
    std::vector<int> W;
    for (int j : warm_passive)
      if (j >= 0 && j < n && !in_p[j]) {
        W.push_back(j);
        in_p[j] = 1;
      }
    const Eigen::VectorXd z = solve_passive(H, g, W);
    if (z.size() > 0 && z.minCoeff() > 0.0) {
      P = W;
      for (std::size_t a = 0; a < W.size(); ++a) res.s[W[a]] = z[static_cast<Eigen::Index>(a)];
    } else {
      std::fill(in_p.begin(), in_p.end(), 0);
    }
  }

  std::vector<char> banned(static_cast<std::size_t>(n), 0);
  for (;;) {
    if (++res.iterations > opt.max_iterations) {
      res.status = SolveStatus::iteration_limit;
      return res;
    }
    const Eigen::VectorXd w = -(H * res.s + g);
    Eigen::Index j = -1;
    double best = wtol;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!in_p[i] && !banned[i] && w[i] > best) {
        best = w[i];
        j = i;
      }
    if (j < 0) break;
    P.push_back(static_cast<int>(j));
    in_p[j] = 1;

    bool first = true;
    for (;;) {
      const Eigen::VectorXd z = solve_passive(H, g, P);
      if (z.minCoeff() > 0.0) {
        for (std::size_t a = 0; a < P.size(); ++a) res.s[P[a]] = z[static_cast<Eigen::Index>(a)];
        std::fill(banned.begin(), banned.end(), 0);
        break;
      }
      if (first && z[static_cast<Eigen::Index>(P.size()) - 1] <= 0.0) {
        // the entering index cannot move: rounding, skip it this round
        P.pop_back();
        in_p[j] = 0;
        banned[j] = 1;
        break;
      }
      first = false;
      double alpha = 1.0;
      for (std::size_t a = 0; a < P.size(); ++a) {
        const double za = z[static_cast<Eigen::Index>(a)];
        if (za <= 0.0) {
          const double sa = res.s[P[a]];
          alpha = std::min(alpha, sa / (sa - za));
        }
      }
      for (std::size_t a = 0; a < P.size(); ++a)
        res.s[P[a]] += alpha * (z[static_cast<Eigen::Index>(a)] - res.s[P[a]]);
      std::vector<int> keep;
      for (int i : P) {
        if (res.s[i] <= 1e-14 * std::max(1.0, res.s.lpNorm<Eigen::Infinity>())) {
          res.s[i] = 0.0;
          in_p[i] = 0;
        } else {
          keep.push_back(i);
        }
      }
      P.swap(keep);
      if (P.empty()) break;
      if (++res.iterations > opt.max_iterations) {
        res.status = SolveStatus::iteration_limit;
        return res;
      }
    }
  }
  return res;
}

L1Result nonneg_l1(const Eigen::MatrixXd& D, const Eigen::VectorXd& c, const SolverOptions& opt) {
  if (D.rows() != c.size()) throw InputError("nonneg_l1: dimension mismatch");
  const Eigen::Index m = D.rows();
  const Eigen::Index ns = D.cols();
  const Eigen::Index nv = ns + 2 * m;
  const Eigen::Index rhs = nv;

  // Row-major tableau; row i is scaled by -1 when -c_i < 0 so the starting
  // basis (one error variable per row) is feasible.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> T =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(m, nv + 1);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const double sign = -c[i] < 0.0 ? -1.0 : 1.0;
    T.row(i).head(ns) = sign * D.row(i);
    T(i, ns + i) = -sign;
    T(i, ns + m + i) = sign;
    T(i, rhs) = -c[i] * sign;
    basis[static_cast<std::size_t>(i)] = sign > 0.0 ? ns + m + i : ns + i;
  }
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(nv);
  cost.tail(2 * m).setOnes();

  // reduced costs: cost - c_B' T, with every basic cost equal to 1
  Eigen::VectorXd red(nv + 1);
  red.head(nv) = cost;
  red[rhs] = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) red -= T.row(i).transpose();
  const double scale = std::max(1.0, c.lpNorm<Eigen::Infinity>());
  const double rtol = 1e-11 * std::max(1.0, D.lpNorm<Eigen::Infinity>());
  constexpr double piv_tol = 1e-12;

  L1Result res;
  int degenerate_run = 0;
  bool bland = false;
  for (;;) {
    if (res.iterations >= opt.max_iterations) {
      res.status = SolveStatus::iteration_limit;
      break;
    }
    Eigen::Index enter = -1;
    double best = -rtol;
    for (Eigen::Index j = 0; j < nv; ++j) {
      if (red[j] < best) {
        enter = j;
        if (bland) break;
        best = red[j];
      }
    }
    if (enter < 0) break;

    Eigen::Index leave = -1;
    double ratio = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      const double a = T(i, enter);
      if (a > piv_tol) {
        const double q = T(i, rhs) / a;
        if (q < ratio - 1e-15 * scale ||
            (q <= ratio + 1e-15 * scale && leave >= 0 &&
             basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
          ratio = std::min(ratio, q);
          leave = i;
        }
      }
    }
    if (leave < 0) {
      // unbounded cannot happen with a nonnegative objective
      res.status = SolveStatus::infeasible;
      break;
    }
    ++res.iterations;
    if (ratio <= 1e-14 * scale) {
      if (++degenerate_run > 50) bland = true;
    } else {
      degenerate_run = 0;
    }

    const double piv = T(leave, enter);
    T.row(leave) /= piv;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i == leave) continue;
      const double f = T(i, enter);
      if (f != 0.0) T.row(i) -= f * T.row(leave);
    }
    const double fr = red[enter];
    red -= fr * T.row(leave).transpose();
    basis[static_cast<std::size_t>(leave)] = enter;
  }

  // Recover the basic solution and duals from the original data for
  // accuracy, then report KKT residuals.
  auto column = [&](Eigen::Index j) -> Eigen::VectorXd {
    if (j < ns) return D.col(j);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
    e[(j - ns) % m] = j < ns + m ? -1.0 : 1.0;
    return e;
  };
  Eigen::MatrixXd Bm(m, m);
  Eigen::VectorXd cB(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index j = basis[static_cast<std::size_t>(i)];
    Bm.col(i) = column(j);
    cB[i] = cost[j];
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(Bm);
  const Eigen::VectorXd xB = lu.solve(-c);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(nv);
  for (Eigen::Index i = 0; i < m; ++i) x[basis[static_cast<std::size_t>(i)]] = std::max(0.0, xB[i]);
  res.dual = lu.transpose().solve(cB);

  res.s = x.head(ns);
  const Eigen::VectorXd ep = x.segment(ns, m), em = x.tail(m);
  res.primal_residual = (D * res.s - ep + em + c).lpNorm<Eigen::Infinity>();
  double dinf = 0.0, comp = 0.0;
  for (Eigen::Index j = 0; j < nv; ++j) {
    const double d = cost[j] - column(j).dot(res.dual);
    dinf = std::max(dinf, -d);
    comp = std::max(comp, std::abs(d * x[j]));
  }
  res.dual_infeasibility = dinf;
  res.complementarity = comp;
  return res;
}

}  // namespace pemreg
