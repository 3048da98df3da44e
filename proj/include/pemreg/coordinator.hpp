#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "pemreg/rng.hpp"

namespace pemreg {

/// Where randomized packet lengths are drawn.
enum class RandomizeAt {
  none,           ///< every packet is delta_p long
  coordinator,    ///< drawn by the coordinator when a request is accepted
  device,         ///< drawn by the device and embedded in its request
  device_string,  ///< devices cycle through a pregenerated string of lengths
};

[[nodiscard]] RandomizeAt parse_randomize_at(const std::string& s);
[[nodiscard]] std::string to_string(RandomizeAt r);

/// Packet lengths are uniform on the dt-grid points of
/// [delta_p - delta_a, delta_p + delta_a] (seconds).
struct PacketPolicy {
  double delta_p_s = 180.0;
  double delta_a_s = 0.0;
  RandomizeAt randomize_at = RandomizeAt::coordinator;

  /// Throws InputError unless 0 <= delta_a < delta_p and both are integer
  /// multiples of dt.
  void validate(double dt) const;
  [[nodiscard]] int mean_steps(double dt) const;
  [[nodiscard]] int half_width_steps(double dt) const;
  [[nodiscard]] int max_steps(double dt) const { return mean_steps(dt) + half_width_steps(dt); }
  [[nodiscard]] bool randomized() const noexcept {
    return delta_a_s > 0.0 && randomize_at != RandomizeAt::none;
  }
};

/// Packet length in steps from a uniform variate u in [0, 1).
[[nodiscard]] int packet_steps_from_uniform(const PacketPolicy& policy, double dt, double u);

/// Packet length in seconds drawn with `rng` at `counter`.
[[nodiscard]] double draw_packet_length(const PacketPolicy& policy, double dt,
                                        const CounterRng& rng, std::uint64_t counter);

struct PacketRequest {
  std::size_t device = 0;
  int requested_steps = 0;  ///< > 0 when the device chose its own length
  double p_kW = 0.0;
};

struct Decision {
  std::size_t device = 0;
  bool accepted = false;
  int packet_steps = 0;
};

/// Packet bookkeeping. `expiry_ledger[i]` holds the kW whose packets end
/// after the step i steps from now; locked_kW is their sum.
struct CoordinatorState {
  double locked_kW = 0.0;
  std::deque<double> expiry_ledger;
  std::int64_t accept_count = 0;
  std::int64_t deny_count = 0;
  std::int64_t shortfall_steps = 0;  ///< steps where requests could not fill the reference
};

struct DecideResult {
  std::vector<Decision> decisions;  ///< one per request, in request order
  CoordinatorState state;
  std::size_t accepted = 0;
  std::size_t denied = 0;
};

/// Accept/deny one step of requests. Requests are visited in a seeded
/// uniform shuffle and accepted greedily while
/// measured + accepted * p <= reference.
[[nodiscard]] DecideResult decide(std::span<const PacketRequest> requests, double reference_kW,
                                  double measured_kW, CoordinatorState state,
                                  const PacketPolicy& policy, double dt, const CounterRng& rng,
                                  std::int64_t step);

/// Ends the current step: releases the packets expiring now and shifts the
/// ledger. Returns the released kW.
double close_step(CoordinatorState& state);

struct CyclingReport {
  std::vector<double> per_device;  ///< OFF->ON transitions per hour
  double mean = 0.0;
  double relative_to_baseline = 1.0;  ///< mean / baseline mean, 1 when no baseline given
};

/// `start` and `end` are cycle counts per device at the ends of a window
/// lasting `hours`.
[[nodiscard]] CyclingReport cycling_report(std::span<const std::int64_t> start,
                                           std::span<const std::int64_t> end, double hours,
                                           double baseline_mean = 0.0);

}  // namespace pemreg
