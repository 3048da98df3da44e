#include "pemreg/vbmodel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pemreg {

namespace {

constexpr double kBoundTol = 1e-9;

std::string fmt(const char* what, double u, double bound) {
  std::ostringstream os;
  os.precision(12);
  os << what << ": u=" << u << " MW, bound=" << bound << " MW";
  return os.str();
}

}  // namespace

void VbParams::validate() const {
  if (N == 0) throw InputError("VbParams: N must be positive");
  if (!(p_rate > 0.0)) throw InputError("VbParams: p_rate must be positive");
  if (!(tau > 0.0) || !(tank_L > 0.0) || !(dt > 0.0))
    throw InputError("VbParams: tau, tank_L and dt must be positive");
  if (n_p < 1) throw InputError("VbParams: n_p must be at least 1");
  if (a1 < 0.0 || a1 > 1.0 || a2 < 0.0 || a2 > 1.0)
    throw InputError("VbParams: a1 and a2 must lie in [0, 1]");
  if (input_delay < 0) throw InputError("VbParams: input_delay must be nonnegative");
  if (!(z_lo < z_set && z_set < z_hi)) throw InputError("VbParams: bad deadband");
}

DeviceParams VbParams::device() const {
  DeviceParams d;
  d.z_lo = z_lo;
  d.z_hi = z_hi;
  d.z_set = z_set;
  d.tank_L = tank_L;
  d.tau_s = tau;
  d.p_rate_kW = p_rate * 1000.0;
  d.m_R_hz = m_R;
  d.x_amb = x_amb;
  return d;
}

double VbParams::p_req(double x1) const { return request_probability(x1, device(), dt); }

double VbParams::p_req_slope(double x1) const {
  if (!(x1 > z_lo && x1 < z_hi))
    throw InputError("linearize: mean temperature " + std::to_string(x1) +
                     " is outside the open deadband, request curve not differentiable");
  const double cs = (z_set - z_lo) / (z_hi - z_set);
  const double mu = m_R * (z_hi - x1) / (x1 - z_lo) * cs;
  const double dmu = -m_R * cs * (z_hi - z_lo) / ((x1 - z_lo) * (x1 - z_lo));
  return dmu * dt * std::exp(-mu * dt);
}

VbParams vb_params_for(const FleetConfig& fleet, const PacketPolicy& policy, double a1,
                       double a2) {
  VbParams p;
  p.N = fleet.N;
  p.p_rate = fleet.device.p_rate_kW / 1000.0;
  p.tau = fleet.device.tau_s;
  p.x_amb = fleet.device.x_amb;
  p.tank_L = fleet.device.tank_L;
  p.Q_mean = fleet.draw.mean_kW();
  p.a1 = a1;
  p.a2 = a2;
  p.n_p = policy.mean_steps(fleet.dt);
  p.dt = fleet.dt;
  p.z_lo = fleet.device.z_lo;
  p.z_hi = fleet.device.z_hi;
  p.z_set = fleet.device.z_set;
  p.m_R = fleet.device.m_R_hz;
  p.validate();
  return p;
}

Eigen::VectorXd VbState::to_vector() const {
  Eigen::VectorXd v(3 + static_cast<Eigen::Index>(z.size()));
  v[0] = x1;
  v[1] = x2;
  v[2] = x3;
  for (std::size_t i = 0; i < z.size(); ++i) v[3 + static_cast<Eigen::Index>(i)] = z[i];
  return v;
}

VbState VbState::from_vector(const Eigen::VectorXd& v) {
  if (v.size() < 4) throw InputError("VbState: vector needs at least 4 entries");
  VbState s;
  s.x1 = v[0];
  s.x2 = v[1];
  s.x3 = v[2];
  s.z.assign(v.data() + 3, v.data() + v.size());
  return s;
}

DownRampViolation::DownRampViolation(double u_, double floor_)
    : Error(fmt("input below the down-ramp floor", u_, floor_)), u(u_), floor(floor_) {}

InsufficientRequests::InsufficientRequests(double u_, double ceiling_)
    : Error(fmt("input above the request ceiling", u_, ceiling_)), u(u_), ceiling(ceiling_) {}

Eigen::VectorXd vb_map(const Eigen::VectorXd& x, double u, const VbParams& p) {
  const Eigen::Index K = p.dim();
  if (x.size() != K) throw InputError("vb_map: state dimension does not match n_p");
  const double n = static_cast<double>(p.N);
  const double x1 = x[0], x2 = x[1], x3 = x[2];
  const double x_on = x2 + x3 - x[K - 1];
  const double u_dev = u / p.p_rate;
  const double heat_kW = 1000.0 * p.p_rate * (x2 + x3) / n;

  Eigen::VectorXd out(K);
  out[0] = x1 * (1.0 - p.dt / p.tau) + p.dt * p.x_amb / p.tau -
           p.dt / p.heat_capacity() * (p.Q_mean - heat_kW);
  out[1] = u_dev - x3;
  out[2] = x3 * (1.0 - p.a2) + p.a1 * p.p_req(x1) * (n - x_on) - p.a1 * (u_dev - x_on);
  out[3] = u_dev - x_on;
  for (Eigen::Index i = 4; i < K; ++i) out[i] = x[i - 1];
  return out;
}

InputBounds feasible_input_bounds(const VbState& st, const VbParams& p) {
  const double x_on = st.x_on();
  const double lo = p.p_rate * x_on;
  const double hi = lo + p.p_rate * p.p_req(st.x1) * (static_cast<double>(p.N) - x_on);
  return {lo, hi};
}

VbState vb_step(const VbState& st, double u, const VbParams& p) {
  if (!std::isfinite(u)) throw InputError("vb_step: input is not finite");
  if (static_cast<int>(st.z.size()) != p.n_p)
    throw InputError("vb_step: state has " + std::to_string(st.z.size()) + " timer states, expected " +
                     std::to_string(p.n_p));
  const InputBounds b = feasible_input_bounds(st, p);
  const double tol = kBoundTol * std::max(1.0, std::abs(b.hi));
  if (u < b.lo - tol) throw DownRampViolation(u, b.lo);
  if (u > b.hi + tol) throw InsufficientRequests(u, b.hi);
  return VbState::from_vector(vb_map(st.to_vector(), u, p));
}

NominalPoint nominal_point(const VbParams& p, double u_nominal) {
  p.validate();
  const double n = static_cast<double>(p.N);
  const double on = u_nominal / p.p_rate;
  if (!(on >= 0.0 && on <= n))
    throw NumericalError("nominal_point: input outside [0, N * p_rate]");

  // Heating balances losses at the fixed point, which pins x1.
  const double x1 = p.x_amb + p.tau / p.heat_capacity() * (1000.0 * u_nominal / n - p.Q_mean);
  const double preq = p.p_req(x1);

  // Uniform conveyor: z = (on - x3) / n_p. The opt-out balance
  //   a2 x3 = a1 (preq (N - on) - (1 - preq) z)
  // is affine in x3.
  const double q = (1.0 - preq) / p.n_p;
  const double denom = p.a2 - p.a1 * q;
  double x3 = 0.0;
  if (p.a1 > 0.0) {
    if (std::abs(denom) < 1e-15)
      throw NumericalError("nominal_point: opt-out balance is singular for these a1, a2");
    x3 = p.a1 * (preq * (n - on) - q * on) / denom;
  }
  if (x3 < 0.0 || x3 > on)
    throw NumericalError("nominal_point: equilibrium opt-out count " + std::to_string(x3) +
                         " is not physical for u=" + std::to_string(u_nominal));

  NominalPoint np;
  np.u0 = u_nominal;
  np.x0.x1 = x1;
  np.x0.x3 = x3;
  np.x0.x2 = on - x3;
  np.x0.z.assign(static_cast<std::size_t>(p.n_p), np.x0.x2 / p.n_p);
  np.y0 = np.x0.output(p);

  const Eigen::VectorXd x0 = np.x0.to_vector();
  const double resid = (vb_map(x0, u_nominal, p) - x0).lpNorm<Eigen::Infinity>();
  if (!(resid < 1e-10))
    throw NumericalError("nominal_point: fixed-point residual " + std::to_string(resid));
  return np;
}

Eigen::VectorXd LinModel::apply_A(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
  for (const auto& e : nonzeros) out[e.row] += e.value * v[e.col];
  return out;
}

LinModel linearize(const VbState& st, double u0, const VbParams& p) {
  const int K = p.dim();
  if (static_cast<int>(st.z.size()) != p.n_p)
    throw InputError("linearize: state has the wrong number of timer states");
  const double n = static_cast<double>(p.N);
  const double x_on = st.x_on();
  const double P = p.p_req(st.x1);
  const double dP = p.p_req_slope(st.x1);
  const int last = K - 1;

  LinModel m;
  m.A = Eigen::MatrixXd::Zero(K, K);
  auto& A = m.A;
  const double heat = p.dt * 1000.0 * p.p_rate / (p.heat_capacity() * n);
  A(0, 0) = 1.0 - p.dt / p.tau;
  A(0, 1) = heat;
  A(0, 2) = heat;

  A(1, 2) = -1.0;

  // x_on = x2 + x3 - z_np enters the opt-out row twice.
  A(2, 0) = p.a1 * dP * (n - x_on);
  A(2, 1) = p.a1 * (1.0 - P);
  A(2, 2) = (1.0 - p.a2) + p.a1 * (1.0 - P);
  A(2, last) += -p.a1 * (1.0 - P);

  A(3, 1) = -1.0;
  A(3, 2) = -1.0;
  A(3, last) += 1.0;
  for (int i = 4; i < K; ++i) A(i, i - 1) = 1.0;

  m.B = Eigen::VectorXd::Zero(K);
  m.B[1] = 1.0 / p.p_rate;
  m.B[2] = -p.a1 / p.p_rate;
  m.B[3] = 1.0 / p.p_rate;

  m.C = Eigen::RowVectorXd::Zero(K);
  m.C[1] = p.p_rate;
  m.C[2] = p.p_rate;
  m.Cm = Eigen::RowVectorXd::Zero(K);
  m.Cm[1] = 1.0;
  m.Cm[2] = 1.0;
  m.Cm[last] += -1.0;

  m.x0 = st.to_vector();
  m.f0 = vb_map(m.x0, u0, p);
  m.u0 = u0;
  m.y0 = m.C.dot(m.x0);
  m.p_rate = p.p_rate;

  for (int c = 0; c < K; ++c)
    for (int r = 0; r < K; ++r)
      if (A(r, c) != 0.0) m.nonzeros.push_back({r, c, A(r, c)});
  return m;
}

VbState observe_fleet(const Fleet& fleet, int n_p) {
  if (n_p < 1) throw InputError("observe_fleet: n_p must be at least 1");
  VbState s;
  s.z.assign(static_cast<std::size_t>(n_p), 0.0);
  double soc = 0.0;
  std::size_t charging = 0, opt_out = 0;
  for (const auto& d : fleet.devices()) {
    soc += d.soc;
    if (d.mode == DeviceMode::opt_out) {
      ++opt_out;
    } else if (d.mode == DeviceMode::charging) {
      ++charging;
      // z_i holds devices with n_p - i steps left; longer randomized
      // packets are lumped with the newest
      const int i = std::max(1, n_p - d.timer_remaining);
      if (i < n_p) s.z[static_cast<std::size_t>(i - 1)] += 1.0;
      else s.z[0] += 1.0;
    }
  }
  const double expired = static_cast<double>(fleet.just_expired());
  s.x1 = soc / static_cast<double>(fleet.devices().size());
  s.x2 = static_cast<double>(charging) + expired;
  s.x3 = static_cast<double>(opt_out);
  if (n_p == 1) s.z[0] = expired;
  else s.z.back() = expired;
  return s;
}

VbPlant::VbPlant(VbParams p, VbState x0, double u_init) : p_(std::move(p)), x_(std::move(x0)) {
  p_.validate();
  fifo_.assign(static_cast<std::size_t>(p_.input_delay), u_init);
}

double VbPlant::step(double u) {
  fifo_.push_back(u);
  double applied = fifo_.front();
  fifo_.pop_front();
  const InputBounds b = feasible_input_bounds(x_, p_);
  applied = std::clamp(applied, b.lo, std::max(b.lo, b.hi));
  x_ = VbState::from_vector(vb_map(x_.to_vector(), applied, p_));
  return x_.output(p_);
}

}  // namespace pemreg
