#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pemreg/scenario.hpp"
#include "pemreg/scoring.hpp"

namespace pemreg {

struct StepRow {
  std::int64_t step = 0;  ///< index within the scored segment
  double t = 0.0;         ///< epoch seconds
  double r = 0.0;         ///< reference, MW
  double u = 0.0;         ///< input sent to the coordinator, MW
  double y = 0.0;         ///< fleet consumption, MW
  double floor = 0.0;     ///< committed power at the start of the step, MW
  std::size_t x_on = 0;
  std::size_t opt_outs = 0;
  std::size_t requests = 0;
  std::size_t accepts = 0;
  std::size_t denies = 0;
};

struct StepDiag {
  std::int64_t step = 0;
  double solve_ms = 0.0;
  SolveStatus status = SolveStatus::optimal;
  int iterations = 0;
  bool fallback = false;
  double objective = 0.0;
};

struct SignalResult {
  int signal = 0;
  std::vector<StepRow> rows;  ///< scored hour followed by the tail
  std::vector<StepDiag> diag;
  double rmae = 0.0;
  double rrmse = 0.0;
  std::optional<ScoreReport> pjm;
  double cycles_per_hour = 0.0;
  std::size_t floor_violations = 0;  ///< steps where u or y fell below the committed power
  std::size_t clamp_events = 0;      ///< steps where the plant raised u to the floor
  std::size_t fallbacks = 0;
  double max_solve_ms = 0.0;
  double mean_solve_ms = 0.0;
  std::vector<std::string> events;
};

struct RunRecord {
  std::string scenario;
  std::string hash;
  std::uint64_t seed = 0;
  Method method = Method::baseline;
  std::vector<SignalResult> signals;
  // means over the signals
  double rmae = 0.0;
  double rrmse = 0.0;
  double precision = 0.0;
  double accuracy = 0.0;
  double delay = 0.0;
  double composite = 0.0;
  double cycles_per_hour = 0.0;
  std::size_t floor_violations = 0;
  std::size_t fallbacks = 0;
  double max_solve_ms = 0.0;
};

struct RunOptions {
  int jobs = 1;            ///< worker threads across signals
  bool keep_rows = true;   ///< retain per-step rows and diagnostics
  int only_signal = -1;    ///< run a single signal index when >= 0
};

/// Reference signals in MW, each covering warm-up, the scored hour, the
/// tail, and the lookahead needed by the controller.
[[nodiscard]] std::vector<Series> build_references(const Scenario& sc);

/// AR model fitted on a training realization independent of the scored
/// signals, in MW.
[[nodiscard]] ArModel train_forecaster(const Scenario& sc);

/// Seed of the fleet and coordinator streams for one signal.
[[nodiscard]] std::uint64_t signal_seed(std::uint64_t seed, int signal);

/// Closed-loop simulation of one signal: reference -> precompensator ->
/// coordinator -> fleet, with a pass-through warm-up.
[[nodiscard]] SignalResult run_signal(const Scenario& sc, std::uint64_t seed, int signal,
                                      const Series& reference,
                                      const std::optional<ArModel>& model, bool keep_rows = true);

/// All signals of a scenario for one seed. Errors carry the signal, step and
/// module that failed.
[[nodiscard]] RunRecord run_scenario(const Scenario& sc, std::uint64_t seed,
                                     const RunOptions& opt = {});

void write_run_csv(const std::filesystem::path& path, const RunRecord& rec);
void write_diagnostics_csv(const std::filesystem::path& path, const RunRecord& rec);
void write_manifest(const std::filesystem::path& path, const Scenario& sc,
                    const std::vector<RunRecord>& recs, const std::vector<std::string>& files);

struct ScoreRow {
  std::string scenario;
  std::string cell;
  std::uint64_t seed = 0;
  int signal = 0;
  std::string method;
  double delta_p_s = 0.0;
  double delta_a_s = 0.0;
  int horizon = 0;
  double rmae = 0.0, rrmse = 0.0;
  double precision = 0.0, accuracy = 0.0, delay = 0.0, composite = 0.0;
  double cycles_per_hour = 0.0;
  std::string error;
};

[[nodiscard]] std::vector<ScoreRow> score_rows(const Scenario& sc, const std::string& cell,
                                               const RunRecord& rec);
void write_score_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);

struct SweepCell {
  std::string id;  ///< axis values joined as key=value;...
  std::vector<std::pair<std::string, std::string>> coords;
  Scenario scenario;
};

/// Cartesian product of the sweep axes; a scenario without axes yields one
/// cell.
[[nodiscard]] std::vector<SweepCell> expand_sweep(const Scenario& sc);

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<ScoreRow> rows;               ///< one per (cell, seed, signal)
  std::vector<std::vector<RunRecord>> runs;  ///< per cell, per seed (absent on failure)
  std::vector<std::string> errors;          ///< per-cell failures
};

/// Runs every (cell, seed, signal) job on `jobs` threads. A failing cell is
/// recorded and the sweep continues.
[[nodiscard]] SweepResult sweep(const Scenario& sc, int jobs = 1, bool keep_rows = false);

struct ReportRow {
  std::string cell;
  std::vector<std::pair<std::string, std::string>> coords;
  std::size_t seeds = 0;
  double rmae_mean = 0, rmae_std = 0;
  double rrmse_mean = 0, rrmse_std = 0;
  double composite_mean = 0, composite_std = 0;
  double precision_mean = 0, accuracy_mean = 0, delay_mean = 0;
  double cycles_mean = 0, cycles_std = 0;
};

struct Report {
  std::vector<ReportRow> rows;
  std::vector<std::string> flags;  ///< ordering violations
  std::string summary;
};

/// Mean and sample standard deviation across seeds of the per-seed signal
/// means. Flags MPC cells that do worse than the matching baseline cell.
[[nodiscard]] Report report(const std::vector<ScoreRow>& rows);
void write_report_csv(const std::filesystem::path& path, const Report& rep);

struct OptOutCalibration {
  double a1 = 0.0;
  double a2 = 0.0;
  double mean_opt_out = 0.0;
  double mean_unmet = 0.0;  ///< requests minus accepts per step
  double mean_entries = 0.0;
  double mean_exits = 0.0;
};

/// Estimates the opt-out rates from a pass-through run of the agent fleet on
/// the first reference signal.
[[nodiscard]] OptOutCalibration calibrate_opt_out(const Scenario& sc, std::uint64_t seed,
                                                  double hours);

}  // namespace pemreg
