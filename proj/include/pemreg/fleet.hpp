#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "pemreg/coordinator.hpp"
#include "pemreg/rng.hpp"

namespace pemreg {

inline constexpr double kSpecificHeat = 4.186;  // kJ/(kg degC)
inline constexpr double kWaterDensity = 0.990;  // kg/L near 50 degC

/// One electric water heater. Temperatures in degC, powers in kW.
struct DeviceParams {
  double z_lo = 43.0;
  double z_hi = 57.0;
  double z_set = 50.0;
  double tank_L = 200.0;
  double tau_s = 108000.0;  ///< 30 h: about 1 degC/h standby loss at 50 degC in 20 degC air
  double p_rate_kW = 4.5;
  double m_R_hz = 1.0 / 300.0;  ///< request rate at the setpoint
  double x_amb = 20.0;

  void validate() const;
  /// kJ per degC of stored water.
  [[nodiscard]] double heat_capacity() const noexcept {
    return kSpecificHeat * kWaterDensity * tank_L;
  }
  /// Insulation loss in kW at temperature `soc`.
  [[nodiscard]] double standby_loss_kW(double soc) const noexcept {
    return heat_capacity() * (soc - x_amb) / tau_s;
  }
};

enum class DeviceMode : std::uint8_t { off, charging, opt_out };

struct DeviceState {
  double soc = 50.0;
  DeviceMode mode = DeviceMode::off;
  int timer_remaining = 0;  ///< steps left in the current packet, including this one
  std::int64_t cycle_count = 0;
  std::uint64_t rng_stream = 0;
  int draw_steps_remaining = 0;
  std::uint32_t string_pos = 0;

  [[nodiscard]] bool consuming() const noexcept { return mode != DeviceMode::off; }
};

/// Hot-water usage as a Poisson train of rectangular thermal pulses.
struct WaterDrawProcess {
  double rate_per_hour = 2.0;
  double pulse_kW = 6.0;
  double pulse_duration_s = 116.0;

  void validate() const;
  [[nodiscard]] double mean_kW() const noexcept {
    return rate_per_hour * pulse_kW * pulse_duration_s / 3600.0;
  }
};

/// Sentinel returned by request_rate below the deadband.
inline constexpr double kInfiniteRate = std::numeric_limits<double>::infinity();

/// Mean request rate (Hz) at temperature `soc`.
[[nodiscard]] double request_rate(double soc, const DeviceParams& p);

/// Probability that an OFF device requests a packet during a step of `dt` s.
[[nodiscard]] double request_probability(double soc, const DeviceParams& p, double dt);

struct Acceptance {
  bool accepted = false;
  int packet_steps = 0;
};

/// Advances one device by one step. `accepted` may only be set for an OFF
/// device that requested this step.
[[nodiscard]] DeviceState step_device(DeviceState st, const DeviceParams& p, Acceptance accepted,
                                      double draw_kW, double dt);

struct FleetConfig {
  std::size_t N = 6000;
  DeviceParams device;
  WaterDrawProcess draw;
  std::uint64_t seed = 1;
  double dt = 2.0;
  int threads = 1;

  void validate() const;
  /// Fleet power at thermal equilibrium with all devices at the setpoint, kW.
  [[nodiscard]] double nominal_kW() const noexcept {
    return static_cast<double>(N) * (draw.mean_kW() + device.standby_loss_kW(device.z_set));
  }
};

struct FleetStepResult {
  std::vector<PacketRequest> requests;  ///< requests for the next step
  double aggregate_kW = 0.0;            ///< consumption during the step
  std::size_t opt_out_count = 0;        ///< devices opted out at the end of the step
  std::size_t new_opt_outs = 0;
  std::size_t expired = 0;  ///< packets that ended with this step
};

/// Agent simulation of a homogeneous fleet. The fleet owns the pending
/// requests between steps: construct, read pending_requests(), decide,
/// then call step() with the decisions.
class Fleet {
 public:
  Fleet(FleetConfig cfg, PacketPolicy policy);

  [[nodiscard]] const FleetConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const PacketPolicy& policy() const noexcept { return policy_; }
  [[nodiscard]] const std::vector<DeviceState>& devices() const noexcept { return devices_; }
  [[nodiscard]] const std::vector<PacketRequest>& pending_requests() const noexcept {
    return pending_;
  }
  [[nodiscard]] std::int64_t current_step() const noexcept { return step_; }

  /// Power already committed for the coming step (charging + opted out), kW.
  [[nodiscard]] double locked_kW() const noexcept;
  [[nodiscard]] std::size_t charging_count() const noexcept { return charging_; }
  [[nodiscard]] std::size_t opt_out_count() const noexcept { return opt_out_; }
  /// Packets that ended with the previous step.
  [[nodiscard]] std::size_t just_expired() const noexcept { return just_expired_; }
  [[nodiscard]] double mean_soc() const;
  [[nodiscard]] std::vector<std::int64_t> cycle_counts() const;

  /// Applies one decision per pending request (missing ones count as
  /// denials), advances every device, and polls requests for the next step.
  /// Throws InputError for a decision that matches no pending request.
  FleetStepResult step(std::span<const Decision> decisions);

 private:
  struct ChunkOut;
  void run_chunk(std::size_t begin, std::size_t end, std::span<const Acceptance> acc,
                 ChunkOut& out);
  [[nodiscard]] std::vector<PacketRequest> poll(std::size_t begin, std::size_t end);

  FleetConfig cfg_;
  PacketPolicy policy_;
  std::vector<DeviceState> devices_;
  std::vector<PacketRequest> pending_;
  std::vector<int> length_string_;
  std::int64_t step_ = 0;
  std::size_t charging_ = 0;
  std::size_t opt_out_ = 0;
  std::size_t just_expired_ = 0;
  int draw_steps_ = 0;
};

}  // namespace pemreg
