#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <deque>
#include <vector>

#include "pemreg/error.hpp"
#include "pemreg/fleet.hpp"

namespace pemreg {

/// Aggregate model parameters. Powers: `p_rate` is the rated power of one
/// device in MW, so the fleet input u (MW) divided by p_rate is a device
/// count. Thermal quantities are per device in kW.
struct VbParams {
  std::size_t N = 6000;
  double p_rate = 0.0045;
  double tau = 108000.0;
  double x_amb = 20.0;
  double tank_L = 200.0;
  double c = kSpecificHeat;
  double rho = kWaterDensity;
  double Q_mean = 0.38666666666666666;
  double a1 = 0.02;
  double a2 = 2.0 / 600.0;
  int n_p = 90;
  int input_delay = 0;  ///< samples between the controller and the plant
  double dt = 2.0;
  // request-rate curve evaluated at the mean temperature
  double z_lo = 43.0;
  double z_hi = 57.0;
  double z_set = 50.0;
  double m_R = 1.0 / 300.0;

  void validate() const;
  [[nodiscard]] int dim() const noexcept { return 3 + n_p; }
  [[nodiscard]] double heat_capacity() const noexcept { return c * rho * tank_L; }
  [[nodiscard]] DeviceParams device() const;
  /// Request probability per OFF device at mean temperature x1.
  [[nodiscard]] double p_req(double x1) const;
  /// d p_req / d x1; throws InputError at or outside the deadband edges.
  [[nodiscard]] double p_req_slope(double x1) const;
};

/// Parameters matching a fleet and packet policy. `n_p` is the mean packet
/// length in steps.
[[nodiscard]] VbParams vb_params_for(const FleetConfig& fleet, const PacketPolicy& policy,
                                     double a1, double a2);

struct VbState {
  double x1 = 50.0;
  double x2 = 0.0;
  double x3 = 0.0;
  std::vector<double> z;

  [[nodiscard]] double x_on() const { return x2 + x3 - (z.empty() ? 0.0 : z.back()); }
  [[nodiscard]] Eigen::VectorXd to_vector() const;
  [[nodiscard]] static VbState from_vector(const Eigen::VectorXd& v);
  /// Output power in MW.
  [[nodiscard]] double output(const VbParams& p) const { return p.p_rate * (x2 + x3); }
};

class DownRampViolation : public Error {
 public:
  DownRampViolation(double u, double floor);
  double u, floor;
};

class InsufficientRequests : public Error {
 public:
  InsufficientRequests(double u, double ceiling);
  double u, ceiling;
};

/// The state map f(x, u) without feasibility checks.
[[nodiscard]] Eigen::VectorXd vb_map(const Eigen::VectorXd& x, double u, const VbParams& p);

/// One step with the (already delayed) input u in MW. Throws
/// DownRampViolation below the floor and InsufficientRequests above the
/// ceiling of feasible_input_bounds, with a relative tolerance of 1e-9.
[[nodiscard]] VbState vb_step(const VbState& st, double u, const VbParams& p);

struct InputBounds {
  double lo = 0.0;
  double hi = 0.0;
};

[[nodiscard]] InputBounds feasible_input_bounds(const VbState& st, const VbParams& p);

struct NominalPoint {
  VbState x0;
  double u0 = 0.0;
  double y0 = 0.0;
};

/// Equilibrium under a constant input with the timer conveyor uniformly
/// filled. Throws NumericalError if the equilibrium is not physical or the
/// residual exceeds 1e-10.
[[nodiscard]] NominalPoint nominal_point(const VbParams& p, double u_nominal);

struct LinModel {
  Eigen::MatrixXd A;
  Eigen::VectorXd B;
  Eigen::RowVectorXd C;   ///< y = C x in MW
  Eigen::RowVectorXd Cm;  ///< x_on = Cm x, in devices
  Eigen::VectorXd f0, x0;
  double u0 = 0.0;
  double y0 = 0.0;
  double p_rate = 0.0;

  /// A * v using only the nonzeros of A.
  [[nodiscard]] Eigen::VectorXd apply_A(const Eigen::VectorXd& v) const;

  struct Entry {
    int row, col;
    double value;
  };
  std::vector<Entry> nonzeros;
};

/// Analytic Jacobians at (x0, u0).
[[nodiscard]] LinModel linearize(const VbState& x0, double u0, const VbParams& p);

/// Aggregate state of a fleet at the start of its next step.
[[nodiscard]] VbState observe_fleet(const Fleet& fleet, int n_p);

/// The aggregate model used as a plant, with an explicit input FIFO of
/// `input_delay` samples. Inputs are clamped to the feasible band so it can
/// be driven by any controller.
class VbPlant {
 public:
  VbPlant(VbParams p, VbState x0, double u_init);
  /// Queues u, applies the input leaving the FIFO and returns the output
  /// power during the step in MW.
  double step(double u);
  [[nodiscard]] const VbState& state() const noexcept { return x_; }
  [[nodiscard]] const std::deque<double>& pending() const noexcept { return fifo_; }

 private:
  VbParams p_;
  VbState x_;
  std::deque<double> fifo_;
};

}  // namespace pemreg
