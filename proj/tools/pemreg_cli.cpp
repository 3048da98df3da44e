#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pemreg/error.hpp"
#include "pemreg/harness.hpp"
#include "pemreg/scenario.hpp"
#include "pemreg/scoring.hpp"
#include "pemreg/signals.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pemreg;

namespace {

struct ScenarioArgs {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  int signals = 0;
};

void add_scenario_args(CLI::App* app, ScenarioArgs& a) {
  auto* c = app->add_option("--config", a.config, "scenario JSON file")->check(CLI::ExistingFile);
  auto* p = app->add_option("--preset", a.preset, "built-in scenario")
                ->check(CLI::IsMember({"fig5a", "fig5b", "fig8", "fig9"}));
  c->excludes(p);
  app->add_option("--seed", a.seed, "override the run seeds with a single seed");
  app->add_option("--out", a.out, "output directory (default: output_dir of the scenario)");
  app->add_option("--signals", a.signals, "use only the first N synthetic signals")
      ->check(CLI::PositiveNumber);
}

Scenario load(const ScenarioArgs& a) {
  Scenario sc = !a.config.empty()   ? load_scenario(a.config)
                : !a.preset.empty() ? load_preset(a.preset)
                                    : Scenario{};
  if (a.seed) sc.run.seeds = {*a.seed};
  if (!a.out.empty()) sc.output_dir = a.out;
  if (a.signals > 0) {
    if (sc.signal.source == "synthetic") sc.signal.count = a.signals;
    else if (static_cast<std::size_t>(a.signals) < sc.signal.files.size())
      sc.signal.files.resize(static_cast<std::size_t>(a.signals));
  }
  sc.validate();
  return sc;
}

Series read_series_arg(const std::string& path, double dt) {
  return load_series(path, dt);
}

json ar_json(const ArModel& m) {
  json roots = json::array();
  for (const auto& z : m.characteristic_roots()) roots.push_back({z.real(), z.imag()});
  return {{"phi", m.phi},
          {"mu", m.mu},
          {"sigma2", m.sigma2},
          {"process_mean", m.process_mean()},
          {"stationary", m.is_stationary()},
          {"roots", roots}};
}

int cmd_run(const ScenarioArgs& a, const std::string& method, int jobs, int only_signal) {
  Scenario sc = load(a);
  if (!method.empty()) sc.method = parse_method(method);
  sc.validate();
  fs::create_directories(sc.output_dir);
  const fs::path dir = sc.output_dir;
  std::vector<RunRecord> recs;
  std::vector<std::string> files;
  std::vector<ScoreRow> rows;
  for (std::uint64_t seed : sc.run.seeds) {
    RunOptions opt;
    opt.jobs = jobs;
    opt.only_signal = only_signal;
    RunRecord rec = run_scenario(sc, seed, opt);
    const std::string stem = to_string(sc.method) + "_seed" + std::to_string(seed);
    write_run_csv(dir / ("run_" + stem + ".csv"), rec);
    files.push_back("run_" + stem + ".csv");
    if (sc.method == Method::mpc_pf || sc.method == Method::mpc_af) {
      write_diagnostics_csv(dir / ("diagnostics_" + stem + ".csv"), rec);
      files.push_back("diagnostics_" + stem + ".csv");
    }
    auto r = score_rows(sc, "run", rec);
    rows.insert(rows.end(), r.begin(), r.end());
    std::printf("seed %llu  %s  RMAE %.5f  RRMSE %.5f", static_cast<unsigned long long>(seed),
                to_string(sc.method).c_str(), rec.rmae, rec.rrmse);
    if (sc.run.pjm) std::printf("  composite %.4f", rec.composite);
    std::printf("  cycles/h %.3f  floor violations %zu  fallbacks %zu\n", rec.cycles_per_hour,
                rec.floor_violations, rec.fallbacks);
    for (auto& s : rec.signals) {
      s.rows.clear();
      s.diag.clear();
    }
    recs.push_back(std::move(rec));
  }
  write_score_csv(dir / "scores.csv", rows);
  files.push_back("scores.csv");
  write_manifest(dir / "manifest.json", sc, recs, files);
  std::printf("wrote %s\n", (dir / "manifest.json").string().c_str());
  return 0;
}

int cmd_sweep(const ScenarioArgs& a, int jobs) {
  const Scenario sc = load(a);
  fs::create_directories(sc.output_dir);
  const fs::path dir = sc.output_dir;
  const SweepResult res = sweep(sc, jobs, false);
  write_score_csv(dir / "scores.csv", res.rows);
  const Report rep = report(res.rows);
  write_report_csv(dir / "report.csv", rep);
  std::vector<RunRecord> recs;
  for (const auto& c : res.runs) recs.insert(recs.end(), c.begin(), c.end());
  write_manifest(dir / "manifest.json", sc, recs, {"scores.csv", "report.csv"});
  std::cout << rep.summary;
  for (const auto& e : res.errors) std::cerr << "cell failed: " << e << '\n';
  return res.errors.empty() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Packetized energy management regulation simulator"};
  app.require_subcommand(1);

  ScenarioArgs run_args;
  std::string run_method;
  int run_jobs = 1, run_signal = -1;
  auto* run = app.add_subcommand("run", "closed-loop run of one scenario");
  add_scenario_args(run, run_args);
  run->add_option("--method", run_method, "baseline, delay, mpc-pf or mpc-af");
  run->add_option("--jobs", run_jobs, "worker threads")->check(CLI::PositiveNumber);
  run->add_option("--signal", run_signal, "run only this signal index");

  ScenarioArgs sweep_args;
  int sweep_jobs = 1;
  auto* sw = app.add_subcommand("sweep", "run every cell of the scenario sweep");
  add_scenario_args(sw, sweep_args);
  sw->add_option("--jobs", sweep_jobs, "worker threads")->check(CLI::PositiveNumber);

  std::string ref_path, out_path;
  double score_dt = 2.0, r_max = 4.7, r_min = 2.7, r0 = 3.7, treg = 1.0, areg = 1.0,
         rr10_frac = 0.25;
  bool pjm = false, printed = false;
  auto* score = app.add_subcommand("score", "tracking and market scores of an output series");
  score->add_option("--ref", ref_path, "reference series, MW")->required()->check(CLI::ExistingFile);
  score->add_option("--out-series", out_path, "output series, MW")
      ->required()
      ->check(CLI::ExistingFile);
  score->add_option("--dt", score_dt, "sample period, s");
  score->add_option("--r-max", r_max);
  score->add_option("--r-min", r_min);
  score->add_flag("--pjm", pjm, "also compute precision, accuracy, delay and composite");
  score->add_option("--r0", r0, "regulation midpoint, MW");
  score->add_option("--treg", treg, "TREG, MW");
  score->add_option("--areg", areg, "AREG, MW");
  score->add_option("--rr10-fraction", rr10_frac, "RR10 as a fraction of AREG");
  score->add_flag("--branch-as-printed", printed, "use the literal TREG branches");

  std::string ar_input;
  std::size_t ar_synth = 0, ar_order = 3, ar_horizon = 0;
  std::uint64_t ar_seed = 424242;
  double ar_dt = 2.0;
  auto* fit = app.add_subcommand("fit-ar", "fit an AR model and optionally forecast");
  auto* fi = fit->add_option("--input", ar_input, "series file")->check(CLI::ExistingFile);
  auto* fsyn = fit->add_option("--synthetic", ar_synth, "fit on N synthetic samples instead");
  fi->excludes(fsyn);
  fit->add_option("--seed", ar_seed, "seed of the synthetic series");
  fit->add_option("--order", ar_order)->check(CLI::Range(1, 64));
  fit->add_option("--horizon", ar_horizon, "forecast steps after the end of the input");
  fit->add_option("--dt", ar_dt);

  std::string st_input, st_bucket = "hour_of_day";
  std::size_t st_lag = 60;
  double st_dt = 2.0;
  auto* stats = app.add_subcommand("stats", "autocorrelation and variability profile");
  stats->add_option("--input", st_input)->required()->check(CLI::ExistingFile);
  stats->add_option("--bucket", st_bucket,
                    "minute-of-hour, hour-of-day, day-of-week or month-of-year");
  stats->add_option("--max-lag", st_lag);
  stats->add_option("--dt", st_dt);

  ScenarioArgs cal_args;
  double cal_hours = 4.0;
  auto* cal = app.add_subcommand("calibrate", "estimate the opt-out rates of the fleet");
  add_scenario_args(cal, cal_args);
  cal->add_option("--hours", cal_hours);

  ScenarioArgs cfg_args;
  auto* cfg = app.add_subcommand("config", "print the canonical scenario JSON");
  add_scenario_args(cfg, cfg_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_args, run_method, run_jobs, run_signal);
    if (*sw) return cmd_sweep(sweep_args, sweep_jobs);
    if (*score) {
      Series r = read_series_arg(ref_path, score_dt);
      Series y = read_series_arg(out_path, score_dt);
      json j = {{"rmae", rmae(r.view(), y.view(), r_max, r_min)},
                {"rrmse", rrmse(r.view(), y.view(), r_max, r_min)}};
      if (pjm) {
        ScoreInputs in = ScoreInputs::constant(to_scoring_grid(r), to_scoring_grid(y), r0,
                                               rr10_frac * areg, treg, areg, r_max, r_min);
        in.branch_as_printed = printed;
        const ScoreReport rep = pjm_scores(in);
        j["precision"] = rep.precision;
        j["accuracy"] = rep.accuracy;
        j["delay"] = rep.delay;
        j["composite"] = rep.composite;
      }
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*fit) {
      Series s;
      if (!ar_input.empty()) s = read_series_arg(ar_input, ar_dt);
      else if (ar_synth > 0) s = RegDSynth{}.generate(ar_seed, ar_synth, ar_dt, 1530403200.0);
      else throw InputError("fit-ar: give --input or --synthetic");
      const ArModel m = fit_ar(s.view(), ar_order);
      json j = ar_json(m);
      j["pacf"] = pacf(s.view(), std::max<std::size_t>(ar_order + 5, 10));
      if (ar_horizon > 0) {
        const ForecastBand b = forecast_with_band(m, s.view(), ar_horizon);
        j["forecast"] = b.mean;
        j["sigma"] = b.sigma;
      }
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*stats) {
      const Series s = read_series_arg(st_input, st_dt);
      json j = {{"samples", s.size()},
                {"acf", acf(s.view(), st_lag)},
                {"pacf", pacf(s.view(), st_lag)}};
      try {
        j["bucket"] = st_bucket;
        j["variability"] = variability_profile(s, parse_bucket(st_bucket));
      } catch (const InputError& e) {
        j["variability_error"] = e.what();
      }
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*cal) {
      const Scenario sc = load(cal_args);
      const OptOutCalibration c = calibrate_opt_out(sc, sc.run.seeds.front(), cal_hours);
      std::cout << json{{"a1", c.a1},
                        {"a2", c.a2},
                        {"mean_opt_out", c.mean_opt_out},
                        {"mean_unmet", c.mean_unmet},
                        {"mean_entries", c.mean_entries},
                        {"mean_exits", c.mean_exits}}
                       .dump(2)
                << '\n';
      return 0;
    }
    if (*cfg) {
      std::cout << to_json_string(load(cfg_args)) << '\n';
      return 0;
    }
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
