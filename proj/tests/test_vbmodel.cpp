#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "pemreg/fleet.hpp"
#include "pemreg/vbmodel.hpp"

using namespace pemreg;

namespace {

VbParams small_params() {
  VbParams p;
  p.n_p = 6;
  p.a1 = 0.03;
  p.a2 = 0.004;
  return p;
}

std::vector<double> as_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST(VbModel, RequestProbabilityMatchesClosedForm) {
  const VbParams p;
  for (double x : {43.5, 45.0, 50.0, 53.2, 56.9}) EXPECT_NEAR(p.p_req(x), oracle::preq(x, p), 1e-15);
  EXPECT_EQ(p.p_req(57.0), 0.0);
  EXPECT_EQ(p.p_req(43.0), 1.0);
  // at the setpoint the rate is m_R
  EXPECT_NEAR(p.p_req(50.0), 1.0 - std::exp(-p.m_R * p.dt), 1e-15);
}

TEST(VbModel, StepMatchesIndependentTranscription) {
  std::mt19937_64 g(7);
  for (const VbParams& p : {small_params(), VbParams{}}) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int t = 0; t < 2000; ++t) {
      const VbState s = oracle::random_state(p, g);
      const std::vector<double> x = as_std(s.to_vector());
      const double lo = oracle::floor_mw(x, p), hi = oracle::ceiling_mw(x, p);
      const double u = lo + (hi - lo) * U(g);
      const std::vector<double> want = oracle::vb_step(x, u, p);
      const std::vector<double> got = as_std(vb_step(s, u, p).to_vector());
      ASSERT_EQ(want.size(), got.size());
      for (std::size_t i = 0; i < want.size(); ++i)
        ASSERT_NEAR(got[i], want[i], 1e-12 * std::max(1.0, std::abs(want[i]))) << "entry " << i;
    }
  }
}

TEST(VbModel, StepRejectsInputsOutsideTheFeasibleBand) {
  const VbParams p = small_params();
  std::mt19937_64 g(3);
  const VbState s = oracle::random_state(p, g);
  const InputBounds b = feasible_input_bounds(s, p);
  EXPECT_THROW((void)vb_step(s, b.lo - 1e-3, p), DownRampViolation);
  EXPECT_THROW((void)vb_step(s, b.hi + 1e-3, p), InsufficientRequests);
  EXPECT_NO_THROW((void)vb_step(s, b.lo, p));
  EXPECT_NO_THROW((void)vb_step(s, b.hi, p));
  VbState bad = s;
  bad.z.pop_back();
  EXPECT_THROW((void)vb_step(bad, b.lo, p), InputError);
}

TEST(VbModel, JacobianMatchesFiniteDifferences) {
  const VbParams p = small_params();
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const VbState s = oracle::random_state(p, g);
    const InputBounds b = feasible_input_bounds(s, p);
    const oracle::JacobianError e = oracle::jacobian_error(s, b.lo + (b.hi - b.lo) * U(g), p);
    EXPECT_LT(e.max_rel, 1e-6);
    EXPECT_LT(e.max_abs_zero, 1e-9);
  }
}

TEST(VbModel, LinearizeRejectsTemperatureOutsideDeadband) {
  const VbParams p = small_params();
  std::mt19937_64 g(1);
  VbState s = oracle::random_state(p, g);
  s.x1 = p.z_hi;
  EXPECT_THROW((void)linearize(s, 1.0, p), InputError);
}

TEST(VbModel, ApplyAMatchesDenseProduct) {
  const VbParams p = small_params();
  std::mt19937_64 g(5);
  const VbState s = oracle::random_state(p, g);
  const LinModel lin = linearize(s, feasible_input_bounds(s, p).lo, p);
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(p.dim(), -1.0, 2.0);
  EXPECT_LT((lin.apply_A(v) - lin.A * v).lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(VbModel, NominalPointIsAFixedPoint) {
  for (double a1 : {0.0, 0.02, 0.05}) {
    VbParams p;
    p.a1 = a1;
    const NominalPoint np = nominal_point(p, 3.7);
    const Eigen::VectorXd x = np.x0.to_vector();
    EXPECT_LT((vb_map(x, np.u0, p) - x).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_NEAR(np.y0, 3.7, 1e-9);
    // heating balances losses
    const double loss = p.heat_capacity() * (np.x0.x1 - p.x_amb) / p.tau + p.Q_mean;
    EXPECT_NEAR(loss * static_cast<double>(p.N) / 1000.0, 3.7, 1e-9);
  }
}

TEST(VbModel, NominalPointRejectsImpossibleInput) {
  // short packets: accepts would outrun requests, so opt-outs go negative
  const VbParams p = small_params();
  EXPECT_THROW((void)nominal_point(p, 3.7), NumericalError);
  EXPECT_THROW((void)nominal_point(p, -1.0), NumericalError);
  EXPECT_THROW((void)nominal_point(p, 1e6), NumericalError);
}

TEST(VbModel, OutputIsRatedPowerTimesConsumingCount) {
  const VbParams p = small_params();
  VbState s;
  s.x2 = 100;
  s.x3 = 20;
  s.z.assign(6, 0.0);
  EXPECT_DOUBLE_EQ(s.output(p), 0.0045 * 120);
}

TEST(VbModel, ObservedFleetStateIsConsistent) {
  FleetConfig fc;
  fc.N = 500;
  PacketPolicy pol;
  pol.delta_p_s = 60;
  Fleet f(fc, pol);
  const int n_p = pol.mean_steps(fc.dt);
  for (int k = 0; k < 50; ++k) {
    std::vector<Decision> d;
    for (const auto& r : f.pending_requests()) d.push_back({r.device, k % 2 == 0, 30});
    (void)f.step(d);
    const VbState s = observe_fleet(f, n_p);
    double zsum = 0.0;
    for (double z : s.z) zsum += z;
    EXPECT_DOUBLE_EQ(s.x2, zsum);
    EXPECT_DOUBLE_EQ(s.x3, static_cast<double>(f.opt_out_count()));
    EXPECT_DOUBLE_EQ(s.x_on(), static_cast<double>(f.charging_count() + f.opt_out_count()));
    EXPECT_NEAR(s.x1, f.mean_soc(), 1e-12);
  }
}

TEST(VbModel, PlantDelaysAndClampsInput) {
  VbParams p;
  p.input_delay = 2;
  const NominalPoint np = nominal_point(p, 3.7);
  VbPlant plant(p, np.x0, 3.7);
  EXPECT_EQ(plant.pending().size(), 2u);
  (void)plant.step(100.0);
  (void)plant.step(3.7);
  EXPECT_EQ(plant.pending().front(), 100.0);
  const InputBounds b = feasible_input_bounds(plant.state(), p);
  const double x3_before = plant.state().x3;
  const double y = plant.step(3.7);
  // the queued 100 MW is clamped to the ceiling
  EXPECT_NEAR(y, b.hi + p.p_rate * (plant.state().x3 - x3_before), 1e-9);
}
