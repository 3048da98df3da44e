#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pemreg/signals.hpp"
#include "pemreg/solver.hpp"
#include "pemreg/vbmodel.hpp"

namespace pemreg {

enum class ForecastMode { perfect, ar, delay, passthrough };

[[nodiscard]] ForecastMode parse_forecast_mode(const std::string& s);
[[nodiscard]] std::string to_string(ForecastMode m);

struct MpcConfig {
  int horizon = 90;  ///< n, in samples
  int p = 2;         ///< norm of the tracking cost, 1 or 2
  int T_d = 0;       ///< the output is asked to follow r delayed by T_d samples
  ForecastMode forecast = ForecastMode::perfect;
  bool clamp_to_bounds = true;
  double kkt_tol = 1e-6;
  SolverOptions solver;

  void validate() const;
};

/// Stacked prediction problem over the horizon:
///   minimize ||Y0 + dY - R||_p^p  s.t.  dY = M_y dU + G_y,  M_u dU <= G_u1 - G_u2.
/// Powers in MW. Row i of the down-ramp block reads
///   u0 + du[i] >= p_rate * Cm * (x0 + dx[i]).
struct MpcProblem {
  Eigen::MatrixXd M_y, M_u;
  Eigen::VectorXd G_y, G_u1, G_u2, R, Y0;
  int p = 2;

  [[nodiscard]] int n() const noexcept { return static_cast<int>(R.size()); }
};

[[nodiscard]] MpcProblem assemble(const LinModel& lin, std::span<const double> R,
                                  const MpcConfig& cfg);

struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
  double subgradient = 0.0;  ///< 1-norm only: distance of the multiplier from sign(e)

  [[nodiscard]] double max() const;
};

struct Solution {
  Eigen::VectorXd dU;
  Eigen::VectorXd slack;  ///< G_u1 - G_u2 - M_u dU, newly accepted MW per step
  double objective = 0.0;
  SolveStatus status = SolveStatus::optimal;
  KktResiduals kkt;
  int iterations = 0;
  std::vector<int> passive;  ///< 2-norm active-set guess for the next step
};

/// Solves by substituting the down-ramp slack, which turns the problem into
/// a nonnegative least-squares (p = 2) or nonnegative least-absolute (p = 1)
/// problem in the slack. Status is downgraded from optimal when a KKT
/// residual exceeds `kkt_tol`.
[[nodiscard]] Solution solve(const MpcProblem& prob, int p, const SolverOptions& opt = {},
                             const std::vector<int>& warm = {}, double kkt_tol = 1e-6);

struct ControllerOutput {
  double u = 0.0;            ///< MW, after clamping
  double u_unclamped = 0.0;  ///< MW, u0 + dU[0]
  SolveStatus status = SolveStatus::optimal;
  bool fallback = false;
  double objective = 0.0;
  double solve_ms = 0.0;
  int iterations = 0;
};

/// Receding-horizon precompensator. Reference samples up to index k are
/// realized; later samples come from the forecaster (perfect mode reads
/// the realized future).
class Precompensator {
 public:
  Precompensator(MpcConfig cfg, VbParams vb, std::optional<ArModel> ar = std::nullopt);

  [[nodiscard]] ControllerOutput step(std::span<const double> r, std::size_t k,
                                      const VbState& observed, double u_prev);

  /// Inputs already sent but not yet applied, oldest first. Needed when the
  /// controller takes over from another sender mid-run.
  void prime_pipeline(std::vector<double> queued);

  /// R[i] = reference at k + input_delay - T_d + i.
  [[nodiscard]] std::vector<double> reference_window(std::span<const double> r,
                                                     std::size_t k) const;

  [[nodiscard]] const MpcConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const std::vector<std::string>& events() const noexcept { return events_; }
  [[nodiscard]] std::size_t fallback_count() const noexcept { return fallbacks_; }

 private:
  MpcConfig cfg_;
  VbParams vb_;
  std::optional<ArModel> ar_;
  std::vector<int> warm_;
  std::deque<double> sent_;
  std::vector<std::string> events_;
  std::size_t fallbacks_ = 0;
};

struct RampSegment {
  std::size_t begin = 0;  ///< first sample of the falling run
  std::size_t end = 0;    ///< last sample
  double drop = 0.0;
  bool mpc_crosses = false;
  bool baseline_crosses = false;
};

struct AnticipationReport {
  std::vector<RampSegment> segments;
  std::size_t mpc_crossings = 0;
  std::size_t baseline_crossings = 0;
};

/// Finds falling runs of r that drop by at least `min_drop` and reports, for
/// each, whether each output goes below r inside the run.
[[nodiscard]] AnticipationReport down_ramp_anticipation_check(std::span<const double> r,
                                                              std::span<const double> y_mpc,
                                                              std::span<const double> y_base,
                                                              double min_drop);

}  // namespace pemreg
