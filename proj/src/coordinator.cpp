#include "pemreg/coordinator.hpp"

#include <cmath>
#include <numeric>

#include "pemreg/error.hpp"

namespace pemreg {

namespace {

int to_steps(double seconds, double dt, const char* what) {
  const double q = seconds / dt;
  const double r = std::round(q);
  if (std::abs(q - r) > 1e-9)
    throw InputError(std::string(what) + " (" + std::to_string(seconds) +
                     " s) is not a multiple of dt");
  return static_cast<int>(r);
}

}  // namespace

RandomizeAt parse_randomize_at(const std::string& s) {
  if (s == "none") return RandomizeAt::none;
  if (s == "coordinator") return RandomizeAt::coordinator;
  if (s == "device") return RandomizeAt::device;
  if (s == "device-string") return RandomizeAt::device_string;
  throw InputError("unknown randomize_at '" + s + "'");
}

std::string to_string(RandomizeAt r) {
  switch (r) {
    case RandomizeAt::none: return "none";
    case RandomizeAt::coordinator: return "coordinator";
    case RandomizeAt::device: return "device";
    case RandomizeAt::device_string: return "device-string";
  }
  return "?";
}

void PacketPolicy::validate(double dt) const {
  if (!(dt > 0.0)) throw InputError("dt must be positive");
  if (!(delta_p_s > 0.0)) throw InputError("packet length must be positive");
  if (delta_a_s < 0.0 || !(delta_a_s < delta_p_s))
    throw InputError("packet half-width must satisfy 0 <= delta_a < delta_p");
  (void)to_steps(delta_p_s, dt, "packet length");
  (void)to_steps(delta_a_s, dt, "packet half-width");
}

int PacketPolicy::mean_steps(double dt) const { return to_steps(delta_p_s, dt, "packet length"); }

int PacketPolicy::half_width_steps(double dt) const {
  return to_steps(delta_a_s, dt, "packet half-width");
}

int packet_steps_from_uniform(const PacketPolicy& policy, double dt, double u) {
  const int mean = policy.mean_steps(dt);
  const int half = policy.half_width_steps(dt);
  if (half == 0) return mean;
  const int support = 2 * half + 1;
  int idx = static_cast<int>(u * support);
  if (idx >= support) idx = support - 1;
  return mean - half + idx;
}

double draw_packet_length(const PacketPolicy& policy, double dt, const CounterRng& rng,
                          std::uint64_t counter) {
  return dt * packet_steps_from_uniform(policy, dt, rng.uniform(counter));
}

DecideResult decide(std::span<const PacketRequest> requests, double reference_kW,
                    double measured_kW, CoordinatorState state, const PacketPolicy& policy,
                    double dt, const CounterRng& rng, std::int64_t step) {
  DecideResult out;
  const std::size_t n = requests.size();
  out.decisions.resize(n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto ustep = static_cast<std::uint64_t>(step);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(i - 1), ustep, 2 * i));
    std::swap(order[i - 1], order[j]);
  }

  constexpr double tol = 1e-9;
  double projected = measured_kW;
  for (const std::size_t idx : order) {
    const PacketRequest& req = requests[idx];
    Decision& d = out.decisions[idx];
    d.device = req.device;
    if (projected + req.p_kW <= reference_kW + tol) {
      int len = policy.mean_steps(dt);
      if (policy.randomize_at == RandomizeAt::coordinator && policy.delta_a_s > 0.0)
        len = packet_steps_from_uniform(policy, dt, rng.uniform(ustep, 2 * idx + 1));
      else if (req.requested_steps > 0)
        len = req.requested_steps;
      d.accepted = true;
      d.packet_steps = len;
      projected += req.p_kW;
      if (state.expiry_ledger.size() < static_cast<std::size_t>(len))
        state.expiry_ledger.resize(static_cast<std::size_t>(len), 0.0);
      state.expiry_ledger[static_cast<std::size_t>(len - 1)] += req.p_kW;
      state.locked_kW += req.p_kW;
      ++out.accepted;
    } else {
      d.accepted = false;
      ++out.denied;
    }
  }
  if (projected + tol < reference_kW && out.denied == 0 &&
      (requests.empty() || reference_kW - projected >= requests.front().p_kW))
    ++state.shortfall_steps;
  state.accept_count += static_cast<std::int64_t>(out.accepted);
  state.deny_count += static_cast<std::int64_t>(out.denied);
  out.state = std::move(state);
  return out;
}

double close_step(CoordinatorState& state) {
  if (state.expiry_ledger.empty()) return 0.0;
  const double released = state.expiry_ledger.front();
  state.expiry_ledger.pop_front();
  // re-sum so rounding never accumulates across steps
  state.locked_kW = 0.0;
  for (double v : state.expiry_ledger) state.locked_kW += v;
  return released;
}

CyclingReport cycling_report(std::span<const std::int64_t> start,
                             std::span<const std::int64_t> end, double hours,
                             double baseline_mean) {
  if (start.size() != end.size()) throw InputError("cycling_report: size mismatch");
  if (!(hours > 0.0)) throw InputError("cycling_report: window must be positive");
  CyclingReport rep;
  rep.per_device.reserve(start.size());
  double total = 0.0;
  for (std::size_t i = 0; i < start.size(); ++i) {
    const double c = static_cast<double>(end[i] - start[i]) / hours;
    rep.per_device.push_back(c);
    total += c;
  }
  rep.mean = start.empty() ? 0.0 : total / static_cast<double>(start.size());
  rep.relative_to_baseline = baseline_mean > 0.0 ? rep.mean / baseline_mean : 1.0;
  return rep;
}

}  // namespace pemreg
