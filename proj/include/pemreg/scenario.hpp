#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pemreg/coordinator.hpp"
#include "pemreg/fleet.hpp"
#include "pemreg/mpc.hpp"
#include "pemreg/signals.hpp"

namespace pemreg {

inline constexpr int kSchemaVersion = 1;

enum class Method { baseline, delay, mpc_pf, mpc_af };

[[nodiscard]] Method parse_method(const std::string& s);
[[nodiscard]] std::string to_string(Method m);

struct SignalSpec {
  std::string source = "synthetic";  ///< "synthetic" or "files"
  std::vector<std::string> files;    ///< one hour-signal per file, normalized
  int count = 12;
  std::uint64_t seed_base = 1000;
  double bias_mw = 3.7;
  double amplitude_mw = 1.0;
  RegDSynth synth;
  int ar_order = 3;
  std::uint64_t ar_train_seed = 424242;
  std::size_t ar_train_samples = 100000;
};

struct RunSpec {
  double warmup_s = 3600.0;
  double duration_s = 3600.0;
  double tail_s = 0.0;  ///< extra simulated time after the scored hour
  bool pjm = false;     ///< compute regulation-market scores (needs tail_s >= 2400)
  std::vector<std::uint64_t> seeds{1};
};

struct ScoringSpec {
  double r0_mw = 3.7;
  double rr10_fraction = 0.25;  ///< RR10 as a fraction of AREG per 10 s sample
  double treg_mw = 1.0;
  double areg_mw = 1.0;
  double r_max = 4.7;
  double r_min = 2.7;
  bool pjm_branch_as_printed = false;
};

/// A sweep axis is a key and a list of values; recognized keys are
/// packet_min, width_min, method, horizon, p, T_d, randomize_at.
struct SweepSpec {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
};

struct Scenario {
  int schema_version = kSchemaVersion;
  std::string name = "default";
  double dt = 2.0;
  FleetConfig fleet;
  PacketPolicy packet;
  // pass-through runs of the default fleet show no opt-out entries; the exit
  // rate matches the 1350 s full-power recovery from z_lo to z_set at dt = 2 s
  double a1 = 0.0;
  double a2 = 2.0 / 1350.0;
  int input_delay = 0;
  int horizon = 0;  ///< 0: one packet length
  MpcConfig mpc;
  Method method = Method::baseline;
  SignalSpec signal;
  RunSpec run;
  ScoringSpec scoring;
  SweepSpec sweep;
  std::string output_dir = "out";

  /// Throws InputError naming the first inconsistent field.
  void validate() const;
  [[nodiscard]] int horizon_steps() const;
  [[nodiscard]] std::size_t warmup_steps() const;
  [[nodiscard]] std::size_t scored_steps() const;
  [[nodiscard]] std::size_t tail_steps() const;
  /// Applies one sweep-axis value.
  void set_axis(const std::string& key, const std::string& value);
};

/// Parses a JSON scenario. Unknown keys are rejected so typos surface.
[[nodiscard]] Scenario parse_scenario(const std::string& json_text,
                                      const std::string& origin = "<buffer>");
[[nodiscard]] Scenario load_scenario(const std::filesystem::path& path);
/// Loads presets/<name>.json from the preset directory.
[[nodiscard]] Scenario load_preset(const std::string& name);
[[nodiscard]] std::filesystem::path preset_dir();

/// Canonical JSON with every field spelled out.
[[nodiscard]] std::string to_json_string(const Scenario& sc, int indent = 2);
/// FNV-1a 64 of the compact canonical JSON, as 16 hex digits.
[[nodiscard]] std::string config_hash(const Scenario& sc);

}  // namespace pemreg
