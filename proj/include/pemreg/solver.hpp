#pragma once

#include <Eigen/Dense>
#include <vector>

namespace pemreg {

enum class SolveStatus { optimal, infeasible, iteration_limit };

[[nodiscard]] const char* to_string(SolveStatus s);

struct SolverOptions {
  int max_iterations = 5000;
  double tolerance = 1e-10;
};

/// min ||D s + c||_2^2 subject to s >= 0 (Lawson-Hanson active set on the
/// normal equations). `warm_passive` lists indices to try as free first.
struct NnlsResult {
  Eigen::VectorXd s;
  std::vector<int> passive;
  SolveStatus status = SolveStatus::optimal;
  int iterations = 0;
};

[[nodiscard]] NnlsResult nnls(const Eigen::MatrixXd& D, const Eigen::VectorXd& c,
                              const std::vector<int>& warm_passive = {},
                              const SolverOptions& opt = {});

/// min ||D s + c||_1 subject to s >= 0, as the linear program
///   min 1'(e+ + e-)  s.t.  D s - e+ + e- = -c,  s, e+, e- >= 0
/// solved by a dense tableau simplex (Dantzig pricing, Bland's rule after
/// repeated degenerate pivots).
struct L1Result {
  Eigen::VectorXd s;
  Eigen::VectorXd dual;  ///< equality-row multipliers y with reduced costs c - A'y
  SolveStatus status = SolveStatus::optimal;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_infeasibility = 0.0;
  double complementarity = 0.0;
};

[[nodiscard]] L1Result nonneg_l1(const Eigen::MatrixXd& D, const Eigen::VectorXd& c,
                                 const SolverOptions& opt = {});

}  // namespace pemreg
