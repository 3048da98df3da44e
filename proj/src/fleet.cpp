#include "pemreg/fleet.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "pemreg/error.hpp"

namespace pemreg {

namespace {

// Lanes of the per-device counter streams.
constexpr std::uint64_t kLaneRequest = 0;
constexpr std::uint64_t kLaneDraw = 1;
constexpr std::uint64_t kLaneLength = 2;
constexpr std::uint64_t kLaneInit = 8;

constexpr std::size_t kStringLength = 256;

}  // namespace

void DeviceParams::validate() const {
  if (!(z_lo < z_set && z_set < z_hi)) throw InputError("device deadband must satisfy z_lo < z_set < z_hi");
  if (!(tank_L > 0.0)) throw InputError("tank volume must be positive");
  if (!(tau_s > 0.0)) throw InputError("thermal time constant must be positive");
  if (!(p_rate_kW > 0.0)) throw InputError("rated power must be positive");
  if (!(m_R_hz > 0.0)) throw InputError("mean request rate must be positive");
}

void WaterDrawProcess::validate() const {
  if (rate_per_hour < 0.0 || pulse_kW < 0.0 || pulse_duration_s < 0.0)
    throw InputError("water draw parameters must be nonnegative");
}

void FleetConfig::validate() const {
  if (N == 0) throw InputError("fleet must contain at least one device");
  if (!(dt > 0.0)) throw InputError("dt must be positive");
  if (threads < 1) throw InputError("threads must be at least 1");
  device.validate();
  draw.validate();
}

double request_rate(double soc, const DeviceParams& p) {
  if (soc >= p.z_hi) return 0.0;
  if (soc <= p.z_lo) return kInfiniteRate;
  return p.m_R_hz * ((p.z_hi - soc) / (soc - p.z_lo)) * ((p.z_set - p.z_lo) / (p.z_hi - p.z_set));
}

double request_probability(double soc, const DeviceParams& p, double dt) {
  const double mu = request_rate(soc, p);
  if (std::isinf(mu)) return 1.0;
  return -std::expm1(-mu * dt);
}

DeviceState step_device(DeviceState st, const DeviceParams& p, Acceptance accepted,
                        double draw_kW, double dt) {
  if (accepted.accepted) {
    if (st.mode != DeviceMode::off)
      throw InputError("step_device: only an OFF device can start a packet");
    if (accepted.packet_steps < 1) throw InputError("step_device: packet must last at least one step");
    st.mode = DeviceMode::charging;
    st.timer_remaining = accepted.packet_steps;
    ++st.cycle_count;
  }
  const double heat_kW = st.consuming() ? p.p_rate_kW : 0.0;
  st.soc = st.soc * (1.0 - dt / p.tau_s) + dt * p.x_amb / p.tau_s -
           dt / p.heat_capacity() * (draw_kW - heat_kW);

  switch (st.mode) {
    case DeviceMode::charging:
      if (--st.timer_remaining == 0) {
        // a packet that ends below the deadband hands over to opt-out
        // without an OFF period, so no new cycle is counted
        st.mode = st.soc <= p.z_lo ? DeviceMode::opt_out : DeviceMode::off;
      }
      break;
    case DeviceMode::off:
      if (st.soc <= p.z_lo) {
        st.mode = DeviceMode::opt_out;
        ++st.cycle_count;
      }
      break;
    case DeviceMode::opt_out:
      if (st.soc >= p.z_set) st.mode = DeviceMode::off;
      break;
  }
  return st;
}

struct Fleet::ChunkOut {
  std::vector<PacketRequest> requests;
  double on_count = 0;
  std::size_t charging = 0, opt_out = 0, new_opt_outs = 0, expired = 0;
};

Fleet::Fleet(FleetConfig cfg, PacketPolicy policy) : cfg_(std::move(cfg)), policy_(policy) {
  cfg_.validate();
  policy_.validate(cfg_.dt);
  draw_steps_ = static_cast<int>(std::lround(cfg_.draw.pulse_duration_s / cfg_.dt));

  if (policy_.randomize_at == RandomizeAt::device_string) {
    const CounterRng rng(cfg_.seed, 0xffffffffULL);
    length_string_.reserve(kStringLength);
    for (std::size_t i = 0; i < kStringLength; ++i)
      length_string_.push_back(packet_steps_from_uniform(policy_, cfg_.dt, rng.uniform(i, kLaneLength)));
  }

  // Start from a spread of temperatures with the equilibrium share of
  // devices mid-packet; callers warm the fleet up before measuring.
  const double on_share =
      std::clamp(cfg_.nominal_kW() / (static_cast<double>(cfg_.N) * cfg_.device.p_rate_kW), 0.0, 1.0);
  const int n_p = policy_.mean_steps(cfg_.dt);
  const auto& dp = cfg_.device;
  devices_.resize(cfg_.N);
  for (std::size_t i = 0; i < cfg_.N; ++i) {
    const CounterRng rng(cfg_.seed, i);
    DeviceState& d = devices_[i];
    d.rng_stream = rng.key();
    d.soc = dp.z_lo + 2.0 + (dp.z_hi - dp.z_lo - 4.0) * rng.uniform(0, kLaneInit);
    if (rng.uniform(0, kLaneInit + 1) < on_share) {
      d.mode = DeviceMode::charging;
      d.timer_remaining = static_cast<int>(rng.uniform_int(1, n_p, 0, kLaneInit + 2));
      ++charging_;
    }
    d.string_pos = static_cast<std::uint32_t>(rng.uniform_int(0, kStringLength - 1, 0, kLaneInit + 3));
  }
  pending_ = poll(0, cfg_.N);
}

double Fleet::locked_kW() const noexcept {
  return cfg_.device.p_rate_kW * static_cast<double>(charging_ + opt_out_);
}

double Fleet::mean_soc() const {
  double s = 0.0;
  for (const auto& d : devices_) s += d.soc;
  return s / static_cast<double>(devices_.size());
}

std::vector<std::int64_t> Fleet::cycle_counts() const {
  std::vector<std::int64_t> out;
  out.reserve(devices_.size());
  for (const auto& d : devices_) out.push_back(d.cycle_count);
  return out;
}

std::vector<PacketRequest> Fleet::poll(std::size_t begin, std::size_t end) {
  std::vector<PacketRequest> out;
  const auto counter = static_cast<std::uint64_t>(step_);
  for (std::size_t i = begin; i < end; ++i) {
    DeviceState& d = devices_[i];
    if (d.mode != DeviceMode::off) continue;
    const CounterRng rng(cfg_.seed, i);
    if (!(rng.uniform(counter, kLaneRequest) < request_probability(d.soc, cfg_.device, cfg_.dt)))
      continue;
    PacketRequest req{i, 0, cfg_.device.p_rate_kW};
    if (policy_.delta_a_s > 0.0) {
      if (policy_.randomize_at == RandomizeAt::device) {
        req.requested_steps =
            packet_steps_from_uniform(policy_, cfg_.dt, rng.uniform(counter, kLaneLength));
      } else if (policy_.randomize_at == RandomizeAt::device_string) {
        req.requested_steps = length_string_[d.string_pos % kStringLength];
        d.string_pos = (d.string_pos + 1) % kStringLength;
      }
    }
    out.push_back(req);
  }
  return out;
}

void Fleet::run_chunk(std::size_t begin, std::size_t end, std::span<const Acceptance> acc,
                      ChunkOut& out) {
  const auto counter = static_cast<std::uint64_t>(step_);
  const double arrival_p = cfg_.draw.rate_per_hour * cfg_.dt / 3600.0;
  for (std::size_t i = begin; i < end; ++i) {
    DeviceState& d = devices_[i];
    const CounterRng rng(cfg_.seed, i);
    if (draw_steps_ > 0 && rng.uniform(counter, kLaneDraw) < arrival_p)
      d.draw_steps_remaining += draw_steps_;
    double draw_kW = 0.0;
    if (d.draw_steps_remaining > 0) {
      draw_kW = cfg_.draw.pulse_kW;
      --d.draw_steps_remaining;
    }
    const DeviceMode before = d.mode;
    const bool on = acc[i].accepted || d.consuming();
    d = step_device(d, cfg_.device, acc[i], draw_kW, cfg_.dt);
    if (on) out.on_count += 1.0;
    if ((before == DeviceMode::charging || acc[i].accepted) && d.mode != DeviceMode::charging)
      ++out.expired;
    if (d.mode == DeviceMode::opt_out && before != DeviceMode::opt_out) ++out.new_opt_outs;
    if (d.mode == DeviceMode::charging) ++out.charging;
    if (d.mode == DeviceMode::opt_out) ++out.opt_out;
  }
}

FleetStepResult Fleet::step(std::span<const Decision> decisions) {
  std::vector<Acceptance> acc(cfg_.N);
  std::vector<char> requested(cfg_.N, 0);
  for (const auto& r : pending_) requested[r.device] = 1;
  for (const auto& dec : decisions) {
    if (dec.device >= cfg_.N || requested[dec.device] == 0)
      throw InputError("fleet_step: decision for device " + std::to_string(dec.device) +
                       " which has no pending request");
    requested[dec.device] = 2;
    if (dec.accepted) acc[dec.device] = Acceptance{true, dec.packet_steps};
  }

  const std::size_t n_threads =
      std::min<std::size_t>(static_cast<std::size_t>(cfg_.threads), cfg_.N);
  std::vector<ChunkOut> chunks(n_threads);
  std::vector<std::size_t> bounds(n_threads + 1);
  for (std::size_t t = 0; t <= n_threads; ++t) bounds[t] = cfg_.N * t / n_threads;

  auto advance = [&](std::size_t t) {
    run_chunk(bounds[t], bounds[t + 1], acc, chunks[t]);
  };
  auto poll_chunk = [&](std::size_t t) { chunks[t].requests = poll(bounds[t], bounds[t + 1]); };

  if (n_threads == 1) {
    advance(0);
    ++step_;
    poll_chunk(0);
  } else {
    {
      std::vector<std::jthread> workers;
      for (std::size_t t = 0; t < n_threads; ++t) workers.emplace_back(advance, t);
    }
    ++step_;
    {
      std::vector<std::jthread> workers;
      for (std::size_t t = 0; t < n_threads; ++t) workers.emplace_back(poll_chunk, t);
    }
  }

  FleetStepResult res;
  double on = 0.0;
  charging_ = opt_out_ = 0;
  for (auto& c : chunks) {
    on += c.on_count;
    charging_ += c.charging;
    opt_out_ += c.opt_out;
    res.new_opt_outs += c.new_opt_outs;
    res.expired += c.expired;
    res.requests.insert(res.requests.end(), c.requests.begin(), c.requests.end());
  }
  res.aggregate_kW = on * cfg_.device.p_rate_kW;
  res.opt_out_count = opt_out_;
  just_expired_ = res.expired;
  pending_ = res.requests;
  return res;
}

}  // namespace pemreg
