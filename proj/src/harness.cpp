#include "pemreg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <deque>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "pemreg/coordinator.hpp"
#include "pemreg/error.hpp"
#include "pemreg/fleet.hpp"
#include "pemreg/mpc.hpp"
#include "pemreg/vbmodel.hpp"

namespace pemreg {

namespace {

constexpr const char* kToolVersion = "1.0.0";
// 2018-07-01T00:00:00Z; synthetic hours are spread over the following year
constexpr double kSyntheticEpoch = 1530403200.0;

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions are
// captured per index.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn,
                  std::vector<std::exception_ptr>& errors) {
  errors.assign(n, nullptr);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto t = static_cast<std::size_t>(std::max(1, jobs));
  if (t == 1 || n <= 1) {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t i = 0; i < std::min(t, n); ++i) pool.emplace_back(worker);
}

std::string what_of(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

std::size_t lookahead_steps(const Scenario& sc) {
  return static_cast<std::size_t>(sc.horizon_steps() + sc.input_delay + 2);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::uint64_t signal_seed(std::uint64_t seed, int signal) {
  return CounterRng(seed, 0x5eed0000ULL + static_cast<std::uint64_t>(signal)).key();
}

std::vector<Series> build_references(const Scenario& sc) {
  const std::size_t need =
      sc.warmup_steps() + sc.scored_steps() + sc.tail_steps() + lookahead_steps(sc);
  std::vector<Series> out;
  if (sc.signal.source == "synthetic") {
    for (int i = 0; i < sc.signal.count; ++i) {
      // a different month and hour of day for each signal
      const double start =
          kSyntheticEpoch + i * 30.0 * 86400.0 + static_cast<double>((7 * i) % 24) * 3600.0;
      const Series s = sc.signal.synth.generate(sc.signal.seed_base + static_cast<std::uint64_t>(i),
                                                need, sc.dt, start - sc.run.warmup_s);
      out.push_back(scale_to_power(s, sc.signal.bias_mw, sc.signal.amplitude_mw));
    }
  } else {
    for (const auto& f : sc.signal.files) {
      Series s = load_series(f, sc.dt);
      if (s.size() < need)
        throw InputError("signal file " + f + " has " + std::to_string(s.size()) +
                         " samples; the run needs " + std::to_string(need) +
                         " (warm-up, scored hour, tail and controller lookahead)");
      s.values.resize(need);
      out.push_back(scale_to_power(s, sc.signal.bias_mw, sc.signal.amplitude_mw));
    }
  }
  return out;
}

ArModel train_forecaster(const Scenario& sc) {
  const Series train = sc.signal.synth.generate(sc.signal.ar_train_seed, sc.signal.ar_train_samples,
                                                sc.dt, kSyntheticEpoch);
  const Series mw = scale_to_power(train, sc.signal.bias_mw, sc.signal.amplitude_mw);
  return fit_ar(mw.view(), static_cast<std::size_t>(sc.signal.ar_order));
}

SignalResult run_signal(const Scenario& sc, std::uint64_t seed, int signal,
                        const Series& reference, const std::optional<ArModel>& model,
                        bool keep_rows) {
  const std::size_t warm = sc.warmup_steps();
  const std::size_t scored = sc.scored_steps();
  const std::size_t total = warm + scored + sc.tail_steps();
  if (reference.size() < total + lookahead_steps(sc))
    throw InputError("run_signal: reference is shorter than the run plus lookahead");
  const std::span<const double> ref = reference.view();

  const std::uint64_t fseed = signal_seed(seed, signal);
  FleetConfig fc = sc.fleet;
  fc.seed = fseed;
  fc.dt = sc.dt;
  Fleet fleet(fc, sc.packet);
  VbParams vb = vb_params_for(fc, sc.packet, sc.a1, sc.a2);
  vb.input_delay = sc.input_delay;

  MpcConfig mc = sc.mpc;
  mc.horizon = sc.horizon_steps();
  std::optional<Precompensator> ctrl;
  if (sc.method == Method::mpc_pf || sc.method == Method::mpc_af) {
    mc.forecast = sc.method == Method::mpc_pf ? ForecastMode::perfect : ForecastMode::ar;
    ctrl.emplace(mc, vb, model);
  }

  SignalResult res;
  res.signal = signal;
  if (keep_rows) res.rows.reserve(total - warm);
  CoordinatorState cs;
  const CounterRng crng(fseed, 0xc0de);
  std::vector<std::int64_t> cyc0, cyc1;
  std::vector<double> r_sc, y_sc;
  r_sc.reserve(total - warm);
  y_sc.reserve(total - warm);
  double u_prev = ref[0];
  std::deque<double> pipe(static_cast<std::size_t>(sc.input_delay), ref[0]);
  double solve_total = 0.0;
  std::size_t solves = 0;
  const char* stage = "setup";

  std::size_t k = 0;
  try {
    for (; k < total; ++k) {
      const bool warmup = k < warm;
      if (k == warm) cyc0 = fleet.cycle_counts();
      if (k == warm + scored) cyc1 = fleet.cycle_counts();
      const double floor = fleet.locked_kW() / 1000.0;

      double u = ref[k];
      StepDiag dg;
      if (!warmup) {
        if (sc.method == Method::delay) {
          u = ref[k >= static_cast<std::size_t>(sc.mpc.T_d) ? k - sc.mpc.T_d : 0];
        } else if (ctrl) {
          stage = "mpc";
          if (k == warm) ctrl->prime_pipeline({pipe.begin(), pipe.end()});
          const VbState obs = observe_fleet(fleet, vb.n_p);
          const ControllerOutput out = ctrl->step(ref, k, obs, u_prev);
          u = out.u;
          dg = {static_cast<std::int64_t>(k - warm), out.solve_ms, out.status, out.iterations,
                out.fallback, out.objective};
          res.max_solve_ms = std::max(res.max_solve_ms, out.solve_ms);
          solve_total += out.solve_ms;
          ++solves;
          if (out.fallback) ++res.fallbacks;
        }
      }
      // the input delay sits between the sender and the coordinator
      double u_arrived = u;
      if (!pipe.empty()) {
        pipe.push_back(u);
        u_arrived = pipe.front();
        pipe.pop_front();
      }
      // committed packets cannot be shed, so the plant never asks for less
      const double u_applied = std::max(u_arrived, floor);

      stage = "coordinator";
      const std::vector<PacketRequest>& reqs = fleet.pending_requests();
      const std::size_t n_req = reqs.size();
      DecideResult d = decide(reqs, u_applied * 1000.0, fleet.locked_kW(), std::move(cs),
                              sc.packet, sc.dt, crng, static_cast<std::int64_t>(k));
      cs = std::move(d.state);
      stage = "fleet";
      const FleetStepResult fr = fleet.step(d.decisions);
      (void)close_step(cs);
      const double y = fr.aggregate_kW / 1000.0;

      if (!warmup) {
        const double tol = 1e-9 * std::max(1.0, floor);
        if (u_applied < floor - tol || y < floor - tol) ++res.floor_violations;
        if (u_applied > u_arrived) ++res.clamp_events;
        if (keep_rows) {
          StepRow row;
          row.step = static_cast<std::int64_t>(k - warm);
          row.t = reference.time_at(k);
          row.r = ref[k];
          row.u = u_applied;
          row.y = y;
          row.floor = floor;
          row.x_on = static_cast<std::size_t>(std::lround(floor * 1000.0 / fc.device.p_rate_kW));
          row.opt_outs = fr.opt_out_count;
          row.requests = n_req;
          row.accepts = d.accepted;
          row.denies = d.denied;
          res.rows.push_back(row);
          if (ctrl) res.diag.push_back(dg);
        }
        r_sc.push_back(ref[k]);
        y_sc.push_back(y);
      }
      u_prev = u_applied;
    }
  } catch (const Error& e) {
    throw Error("signal " + std::to_string(signal) + ", step " + std::to_string(k) + " (" +
                stage + "): " + e.what());
  }
  if (cyc1.empty()) cyc1 = fleet.cycle_counts();
  if (ctrl) res.events = ctrl->events();
  res.mean_solve_ms = solves ? solve_total / static_cast<double>(solves) : 0.0;

  const auto rs = std::span<const double>(r_sc).first(scored);
  const auto ys = std::span<const double>(y_sc).first(scored);
  res.rmae = rmae(rs, ys, sc.scoring.r_max, sc.scoring.r_min);
  res.rrmse = rrmse(rs, ys, sc.scoring.r_max, sc.scoring.r_min);
  res.cycles_per_hour = cycling_report(cyc0, cyc1, sc.run.duration_s / 3600.0).mean;

  if (sc.run.pjm) {
    Series rr, yy;
    rr.dt = yy.dt = sc.dt;
    rr.unit = yy.unit = Unit::megawatt;
    rr.values = r_sc;
    yy.values = y_sc;
    const auto& sp = sc.scoring;
    ScoreInputs in = ScoreInputs::constant(to_scoring_grid(rr), to_scoring_grid(yy), sp.r0_mw,
                                           sp.rr10_fraction * sp.areg_mw, sp.treg_mw, sp.areg_mw,
                                           sp.r_max, sp.r_min);
    in.branch_as_printed = sp.pjm_branch_as_printed;
    ScoreReport rep = pjm_scores(in);
    rep.rmae = res.rmae;
    rep.rrmse = res.rrmse;
    res.pjm = std::move(rep);
  }
  return res;
}

RunRecord run_scenario(const Scenario& sc, std::uint64_t seed, const RunOptions& opt) {
  sc.validate();
  const std::vector<Series> refs = build_references(sc);
  std::optional<ArModel> model;
  if (sc.method == Method::mpc_af) model = train_forecaster(sc);

  std::vector<int> which;
  for (int i = 0; i < static_cast<int>(refs.size()); ++i)
    if (opt.only_signal < 0 || opt.only_signal == i) which.push_back(i);
  if (which.empty()) throw InputError("run_scenario: no signal selected");

  RunRecord rec;
  rec.scenario = sc.name;
  rec.hash = config_hash(sc);
  rec.seed = seed;
  rec.method = sc.method;
  rec.signals.resize(which.size());
  std::vector<std::exception_ptr> errs;
  parallel_for(
      which.size(), opt.jobs,
      [&](std::size_t i) {
        rec.signals[i] = run_signal(sc, seed, which[i], refs[static_cast<std::size_t>(which[i])],
                                    model, opt.keep_rows);
      },
      errs);
  for (const auto& e : errs)
    if (e) std::rethrow_exception(e);

  const double n = static_cast<double>(rec.signals.size());
  for (const auto& s : rec.signals) {
    rec.rmae += s.rmae / n;
    rec.rrmse += s.rrmse / n;
    rec.cycles_per_hour += s.cycles_per_hour / n;
    rec.floor_violations += s.floor_violations;
    rec.fallbacks += s.fallbacks;
    rec.max_solve_ms = std::max(rec.max_solve_ms, s.max_solve_ms);
    if (s.pjm) {
      rec.precision += s.pjm->precision / n;
      rec.accuracy += s.pjm->accuracy / n;
      rec.delay += s.pjm->delay / n;
      rec.composite += s.pjm->composite / n;
    }
  }
  return rec;
}

void write_run_csv(const std::filesystem::path& path, const RunRecord& rec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "signal,step,t,r_mw,u_mw,y_mw,floor_mw,x_on,opt_outs,requests,accepts,denies\n";
  for (const auto& s : rec.signals) {
    for (const auto& r : s.rows) {
      char t[32];
      std::snprintf(t, sizeof t, "%.1f", r.t);
      out << s.signal << ',' << r.step << ',' << t << ',' << num(r.r) << ',' << num(r.u) << ','
          << num(r.y) << ',' << num(r.floor) << ',' << r.x_on << ',' << r.opt_outs << ','
          << r.requests << ',' << r.accepts << ',' << r.denies << '\n';
    }
  }
}

void write_diagnostics_csv(const std::filesystem::path& path, const RunRecord& rec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "signal,step,solve_ms,status,iterations,fallback,objective\n";
  for (const auto& s : rec.signals)
    for (const auto& d : s.diag)
      out << s.signal << ',' << d.step << ',' << num(d.solve_ms) << ',' << to_string(d.status)
          << ',' << d.iterations << ',' << (d.fallback ? 1 : 0) << ',' << num(d.objective)
          << '\n';
}

void write_manifest(const std::filesystem::path& path, const Scenario& sc,
                    const std::vector<RunRecord>& recs, const std::vector<std::string>& files) {
  using nlohmann::json;
  json j;
  j["tool"] = "pemreg";
  j["version"] = kToolVersion;
  j["schema_version"] = kSchemaVersion;
  j["scenario"] = sc.name;
  j["config_hash"] = config_hash(sc);
  j["config"] = json::parse(to_json_string(sc));
  json runs = json::array();
  for (const auto& r : recs) {
    json sig = json::array();
    for (const auto& s : r.signals) {
      json e = {{"signal", s.signal},
                {"rmae", s.rmae},
                {"rrmse", s.rrmse},
                {"cycles_per_hour", s.cycles_per_hour},
                {"floor_violations", s.floor_violations},
                {"clamp_events", s.clamp_events},
                {"fallbacks", s.fallbacks},
                {"max_solve_ms", s.max_solve_ms},
                {"events", s.events}};
      if (s.pjm)
        e["pjm"] = {{"precision", s.pjm->precision},
                    {"accuracy", s.pjm->accuracy},
                    {"delay", s.pjm->delay},
                    {"composite", s.pjm->composite}};
      sig.push_back(e);
    }
    runs.push_back({{"seed", r.seed},
                    {"method", to_string(r.method)},
                    {"rmae", r.rmae},
                    {"rrmse", r.rrmse},
                    {"composite", r.composite},
                    {"cycles_per_hour", r.cycles_per_hour},
                    {"floor_violations", r.floor_violations},
                    {"fallbacks", r.fallbacks},
                    {"signals", sig}});
  }
  j["runs"] = runs;
  j["files"] = files;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<ScoreRow> score_rows(const Scenario& sc, const std::string& cell,
                                 const RunRecord& rec) {
  std::vector<ScoreRow> rows;
  for (const auto& s : rec.signals) {
    ScoreRow r;
    r.scenario = sc.name;
    r.cell = cell;
    r.seed = rec.seed;
    r.signal = s.signal;
    r.method = to_string(sc.method);
    r.delta_p_s = sc.packet.delta_p_s;
    r.delta_a_s = sc.packet.delta_a_s;
    r.horizon = sc.horizon_steps();
    r.rmae = s.rmae;
    r.rrmse = s.rrmse;
    if (s.pjm) {
      r.precision = s.pjm->precision;
      r.accuracy = s.pjm->accuracy;
      r.delay = s.pjm->delay;
      r.composite = s.pjm->composite;
    }
    r.cycles_per_hour = s.cycles_per_hour;
    rows.push_back(r);
  }
  return rows;
}

void write_score_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "scenario,cell,seed,signal,method,delta_p_s,delta_a_s,horizon,rmae,rrmse,precision,"
         "accuracy,delay,composite,cycles_per_hour,error\n";
  for (const auto& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << r.scenario << ',' << r.cell << ',' << r.seed << ',' << r.signal << ',' << r.method
        << ',' << num(r.delta_p_s) << ',' << num(r.delta_a_s) << ',' << r.horizon << ','
        << num(r.rmae) << ',' << num(r.rrmse) << ',' << num(r.precision) << ','
        << num(r.accuracy) << ',' << num(r.delay) << ',' << num(r.composite) << ','
        << num(r.cycles_per_hour) << ',' << err << '\n';
  }
}

std::vector<SweepCell> expand_sweep(const Scenario& sc) {
  std::vector<SweepCell> cells{{"", {}, sc}};
  for (const auto& [key, values] : sc.sweep.axes) {
    std::vector<SweepCell> next;
    for (const auto& c : cells) {
      for (const auto& v : values) {
        SweepCell n = c;
        n.scenario.set_axis(key, v);
        n.coords.emplace_back(key, v);
        n.id += (n.id.empty() ? "" : ";") + key + "=" + v;
        next.push_back(std::move(n));
      }
    }
    cells = std::move(next);
  }
  for (auto& c : cells) {
    if (c.id.empty()) c.id = "all";
    c.scenario.sweep.axes.clear();
    c.scenario.validate();
  }
  return cells;
}

SweepResult sweep(const Scenario& sc, int jobs, bool keep_rows) {
  SweepResult out;
  out.cells = expand_sweep(sc);
  const std::size_t nc = out.cells.size();
  const std::size_t ns = sc.run.seeds.size();

  // shared inputs per cell
  std::vector<std::vector<Series>> refs(nc);
  std::vector<std::optional<ArModel>> models(nc);
  std::vector<std::string> cell_error(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    try {
      refs[c] = build_references(out.cells[c].scenario);
      if (out.cells[c].scenario.method == Method::mpc_af)
        models[c] = train_forecaster(out.cells[c].scenario);
    } catch (const std::exception& e) {
      cell_error[c] = e.what();
    }
  }

  struct Job {
    std::size_t cell, seed;
    int signal;
  };
  std::vector<Job> jobs_list;
  for (std::size_t c = 0; c < nc; ++c)
    if (cell_error[c].empty())
      for (std::size_t s = 0; s < ns; ++s)
        for (int i = 0; i < static_cast<int>(refs[c].size()); ++i) jobs_list.push_back({c, s, i});

  std::vector<SignalResult> results(jobs_list.size());
  std::vector<std::exception_ptr> errs;
  parallel_for(
      jobs_list.size(), jobs,
      [&](std::size_t j) {
        const Job& jb = jobs_list[j];
        results[j] = run_signal(out.cells[jb.cell].scenario, sc.run.seeds[jb.seed], jb.signal,
                                refs[jb.cell][static_cast<std::size_t>(jb.signal)], models[jb.cell],
                                keep_rows);
      },
      errs);
  for (std::size_t j = 0; j < jobs_list.size(); ++j)
    if (errs[j] && cell_error[jobs_list[j].cell].empty())
      cell_error[jobs_list[j].cell] = what_of(errs[j]);

  out.runs.assign(nc, {});
  std::size_t j = 0;
  for (std::size_t c = 0; c < nc; ++c) {
    const Scenario& cs = out.cells[c].scenario;
    if (!cell_error[c].empty()) {
      out.errors.push_back(out.cells[c].id + ": " + cell_error[c]);
      ScoreRow r;
      r.scenario = cs.name;
      r.cell = out.cells[c].id;
      r.method = to_string(cs.method);
      r.error = cell_error[c];
      out.rows.push_back(r);
      while (j < jobs_list.size() && jobs_list[j].cell == c) ++j;
      continue;
    }
    for (std::size_t s = 0; s < ns; ++s) {
      RunRecord rec;
      rec.scenario = cs.name;
      rec.hash = config_hash(cs);
      rec.seed = sc.run.seeds[s];
      rec.method = cs.method;
      while (j < jobs_list.size() && jobs_list[j].cell == c && jobs_list[j].seed == s)
        rec.signals.push_back(std::move(results[j++]));
      const double n = static_cast<double>(rec.signals.size());
      for (const auto& sr : rec.signals) {
        rec.rmae += sr.rmae / n;
        rec.rrmse += sr.rrmse / n;
        rec.cycles_per_hour += sr.cycles_per_hour / n;
        rec.floor_violations += sr.floor_violations;
        rec.fallbacks += sr.fallbacks;
        rec.max_solve_ms = std::max(rec.max_solve_ms, sr.max_solve_ms);
        if (sr.pjm) rec.composite += sr.pjm->composite / n;
      }
      const auto rows = score_rows(cs, out.cells[c].id, rec);
      out.rows.insert(out.rows.end(), rows.begin(), rows.end());
      out.runs[c].push_back(std::move(rec));
    }
  }
  return out;
}

namespace {

std::string strip_method(const std::string& cell) {
  std::stringstream ss(cell);
  std::string part, out;
  while (std::getline(ss, part, ';')) {
    if (part.rfind("method=", 0) == 0) continue;
    out += (out.empty() ? "" : ";") + part;
  }
  return out;
}

}  // namespace

Report report(const std::vector<ScoreRow>& rows) {
  // cell -> seed -> signal rows
  std::map<std::string, std::map<std::uint64_t, std::vector<const ScoreRow*>>> groups;
  std::map<std::string, std::string> cell_method;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    const std::string key = r.scenario + "|" + r.cell + "|" + r.method;
    if (!groups.count(key)) order.push_back(key);
    if (r.error.empty()) groups[key][r.seed].push_back(&r);
    else groups[key];
    cell_method[key] = r.method;
  }

  Report rep;
  std::map<std::string, const ReportRow*> by_key;
  rep.rows.reserve(order.size());
  for (const auto& key : order) {
    ReportRow rr;
    rr.cell = key;
    std::vector<double> rm, rs, comp, prec, acc, del, cyc;
    for (const auto& [seed, sig] : groups[key]) {
      double a = 0, b = 0, c = 0, p = 0, q = 0, d = 0, y = 0;
      for (const ScoreRow* s : sig) {
        a += s->rmae;
        b += s->rrmse;
        c += s->composite;
        p += s->precision;
        q += s->accuracy;
        d += s->delay;
        y += s->cycles_per_hour;
      }
      const double n = static_cast<double>(sig.size());
      rm.push_back(a / n);
      rs.push_back(b / n);
      comp.push_back(c / n);
      prec.push_back(p / n);
      acc.push_back(q / n);
      del.push_back(d / n);
      cyc.push_back(y / n);
    }
    rr.seeds = rm.size();
    rr.rmae_mean = mean_of(rm);
    rr.rmae_std = sample_std(rm);
    rr.rrmse_mean = mean_of(rs);
    rr.rrmse_std = sample_std(rs);
    rr.composite_mean = mean_of(comp);
    rr.composite_std = sample_std(comp);
    rr.precision_mean = mean_of(prec);
    rr.accuracy_mean = mean_of(acc);
    rr.delay_mean = mean_of(del);
    rr.cycles_mean = mean_of(cyc);
    rr.cycles_std = sample_std(cyc);
    rep.rows.push_back(rr);
  }
  for (const auto& r : rep.rows) by_key[r.cell] = &r;

  // ordering checks against the baseline cell with the same other coordinates
  for (const auto& r : rep.rows) {
    const auto p1 = r.cell.find('|');
    const auto p2 = r.cell.rfind('|');
    const std::string scen = r.cell.substr(0, p1);
    const std::string cell = r.cell.substr(p1 + 1, p2 - p1 - 1);
    const std::string method = r.cell.substr(p2 + 1);
    if (method != "mpc-pf" && method != "mpc-af") continue;
    const std::string stripped = strip_method(cell);
    const ReportRow* base = nullptr;
    const ReportRow* pf = nullptr;
    for (const auto& o : rep.rows) {
      const auto q1 = o.cell.find('|');
      const auto q2 = o.cell.rfind('|');
      if (o.cell.substr(0, q1) != scen) continue;
      if (strip_method(o.cell.substr(q1 + 1, q2 - q1 - 1)) != stripped) continue;
      const std::string m = o.cell.substr(q2 + 1);
      if (m == "baseline") base = &o;
      if (m == "mpc-pf") pf = &o;
    }
    if (base && r.seeds && base->seeds) {
      const double slack = method == "mpc-af" ? 1.005 : 1.0;
      if (r.rrmse_mean > base->rrmse_mean * slack)
        rep.flags.push_back("ORDERING " + scen + " [" + stripped + "]: " + method + " RRMSE " +
                            num(r.rrmse_mean) + " exceeds baseline " + num(base->rrmse_mean));
    }
    if (method == "mpc-af" && pf && pf->seeds && r.seeds && pf->rrmse_mean > r.rrmse_mean)
      rep.flags.push_back("ORDERING " + scen + " [" + stripped + "]: mpc-pf RRMSE " +
                          num(pf->rrmse_mean) + " exceeds mpc-af " + num(r.rrmse_mean));
  }

  std::ostringstream os;
  for (const auto& r : rep.rows) {
    os << r.cell << "  seeds=" << r.seeds << "  RMAE " << num(r.rmae_mean) << " +- "
       << num(r.rmae_std) << "  RRMSE " << num(r.rrmse_mean) << " +- " << num(r.rrmse_std)
       << "  composite " << num(r.composite_mean) << " +- " << num(r.composite_std)
       << "  cycles/h " << num(r.cycles_mean) << " +- " << num(r.cycles_std) << '\n';
  }
  if (rep.flags.empty()) os << "no ordering violations\n";
  for (const auto& f : rep.flags) os << f << '\n';
  rep.summary = os.str();
  return rep;
}

void write_report_csv(const std::filesystem::path& path, const Report& rep) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "key,seeds,rmae_mean,rmae_std,rrmse_mean,rrmse_std,precision_mean,accuracy_mean,"
         "delay_mean,composite_mean,composite_std,cycles_mean,cycles_std\n";
  for (const auto& r : rep.rows)
    out << r.cell << ',' << r.seeds << ',' << num(r.rmae_mean) << ',' << num(r.rmae_std) << ','
        << num(r.rrmse_mean) << ',' << num(r.rrmse_std) << ',' << num(r.precision_mean) << ','
        << num(r.accuracy_mean) << ',' << num(r.delay_mean) << ',' << num(r.composite_mean)
        << ',' << num(r.composite_std) << ',' << num(r.cycles_mean) << ','
        << num(r.cycles_std) << '\n';
}

OptOutCalibration calibrate_opt_out(const Scenario& sc, std::uint64_t seed, double hours) {
  if (!(hours > 0.0)) throw InputError("calibrate_opt_out: hours must be positive");
  Scenario s = sc;
  s.run.duration_s = std::max(3600.0, std::ceil(hours * 3600.0 / s.dt) * s.dt);
  s.run.tail_s = 0.0;
  s.run.pjm = false;
  s.signal.count = 1;
  s.method = Method::baseline;
  const Series ref = build_references(s).front();

  FleetConfig fc = s.fleet;
  fc.seed = signal_seed(seed, 0);
  fc.dt = s.dt;
  Fleet fleet(fc, s.packet);
  CoordinatorState cs;
  const CounterRng crng(fc.seed, 0xc0de);
  const std::size_t warm = s.warmup_steps();
  const std::size_t total = warm + s.scored_steps();
  double x3 = 0, unmet = 0, entries = 0, exits = 0;
  for (std::size_t k = 0; k < total; ++k) {
    const std::size_t oo = fleet.opt_out_count();
    const std::size_t nreq = fleet.pending_requests().size();
    const double u = std::max(ref[k], fleet.locked_kW() / 1000.0);
    DecideResult d = decide(fleet.pending_requests(), u * 1000.0, fleet.locked_kW(),
                            std::move(cs), s.packet, s.dt, crng, static_cast<std::int64_t>(k));
    cs = std::move(d.state);
    const FleetStepResult fr = fleet.step(d.decisions);
    (void)close_step(cs);
    if (k >= warm) {
      x3 += static_cast<double>(oo);
      unmet += static_cast<double>(nreq - d.accepted);
      entries += static_cast<double>(fr.new_opt_outs);
      exits += static_cast<double>(oo + fr.new_opt_outs) - static_cast<double>(fr.opt_out_count);
    }
  }
  const double n = static_cast<double>(total - warm);
  OptOutCalibration c;
  c.mean_opt_out = x3 / n;
  c.mean_unmet = unmet / n;
  c.mean_entries = entries / n;
  c.mean_exits = exits / n;
  c.a1 = c.mean_unmet > 0.0 ? c.mean_entries / c.mean_unmet : 0.0;
  c.a2 = c.mean_opt_out > 0.0 ? c.mean_exits / c.mean_opt_out : 0.0;
  return c;
}

}  // namespace pemreg
