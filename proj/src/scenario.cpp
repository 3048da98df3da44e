#include "pemreg/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pemreg/error.hpp"

namespace pemreg {

using nlohmann::json;

Method parse_method(const std::string& s) {
  if (s == "baseline") return Method::baseline;
  if (s == "delay") return Method::delay;
  if (s == "mpc-pf") return Method::mpc_pf;
  if (s == "mpc-af") return Method::mpc_af;
  throw InputError("unknown method '" + s + "' (expected baseline, delay, mpc-pf or mpc-af)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::baseline: return "baseline";
    case Method::delay: return "delay";
    case Method::mpc_pf: return "mpc-pf";
    case Method::mpc_af: return "mpc-af";
  }
  return "?";
}

namespace {

// Reads fields from one JSON object and rejects keys nobody asked for.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError(path_ + ": expected an object");
  }
  ~Obj() = default;

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw InputError(path_ + "." + key + ": " + e.what());
    }
  }

  [[nodiscard]] const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  [[nodiscard]] std::string sub(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw InputError(path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string value_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void read_device(const json& j, const std::string& path, DeviceParams& d) {
  Obj o(j, path);
  o.get("z_lo", d.z_lo);
  o.get("z_hi", d.z_hi);
  o.get("z_set", d.z_set);
  o.get("tank_L", d.tank_L);
  o.get("tau_s", d.tau_s);
  o.get("p_rate_kW", d.p_rate_kW);
  o.get("m_R_hz", d.m_R_hz);
  o.get("x_amb", d.x_amb);
  o.finish();
}

void read_fleet(const json& j, const std::string& path, FleetConfig& f) {
  Obj o(j, path);
  o.get("N", f.N);
  o.get("threads", f.threads);
  if (const json* d = o.child("device")) read_device(*d, o.sub("device"), f.device);
  if (const json* w = o.child("draw")) {
    Obj d(*w, o.sub("draw"));
    d.get("rate_per_hour", f.draw.rate_per_hour);
    d.get("pulse_kW", f.draw.pulse_kW);
    d.get("pulse_duration_s", f.draw.pulse_duration_s);
    d.finish();
  }
  o.finish();
}

}  // namespace

void Scenario::validate() const {
  if (schema_version != kSchemaVersion)
    throw InputError("scenario: schema_version " + std::to_string(schema_version) +
                     " is not supported (expected " + std::to_string(kSchemaVersion) + ")");
  if (!(dt > 0.0)) throw InputError("scenario: dt must be positive");
  fleet.validate();
  packet.validate(dt);
  if (a1 < 0.0 || a1 > 1.0 || a2 < 0.0 || a2 > 1.0)
    throw InputError("scenario: a1 and a2 must lie in [0, 1]");
  if (input_delay < 0) throw InputError("scenario: input_delay must be nonnegative");
  if (horizon < 0) throw InputError("scenario: horizon must be nonnegative");
  MpcConfig m = mpc;
  m.horizon = horizon_steps();
  m.validate();
  if (signal.source != "synthetic" && signal.source != "files")
    throw InputError("scenario: signal.source must be 'synthetic' or 'files'");
  if (signal.source == "files" && signal.files.empty())
    throw InputError("scenario: signal.files is empty");
  if (signal.source == "synthetic" && signal.count < 1)
    throw InputError("scenario: signal.count must be at least 1");
  if (!(signal.amplitude_mw > 0.0)) throw InputError("scenario: amplitude must be positive");
  if (signal.ar_order < 1) throw InputError("scenario: ar_order must be at least 1");
  if (run.seeds.empty()) throw InputError("scenario: seeds must be nonempty");
  if (run.warmup_s < 0.0 || run.tail_s < 0.0)
    throw InputError("scenario: warmup and tail must be nonnegative");
  if (run.duration_s < 3600.0) throw InputError("scenario: duration must cover one hour");
  if (run.pjm && run.tail_s < 10.0 * static_cast<double>(240))
    throw InputError("scenario: regulation scores need tail_s >= 2400 s of lookahead");
  if (run.pjm && std::abs(run.duration_s - 3600.0) > 1e-9)
    throw InputError("scenario: regulation scores are defined on exactly one hour");
  if (!(scoring.r_max > scoring.r_min)) throw InputError("scenario: r_max must exceed r_min");
  for (double s : {run.warmup_s, run.duration_s, run.tail_s}) {
    const double q = s / dt;
    if (std::abs(q - std::round(q)) > 1e-9)
      throw InputError("scenario: run durations must be multiples of dt");
  }
}

int Scenario::horizon_steps() const { return horizon > 0 ? horizon : packet.mean_steps(dt); }
std::size_t Scenario::warmup_steps() const {
  return static_cast<std::size_t>(std::lround(run.warmup_s / dt));
}
std::size_t Scenario::scored_steps() const {
  return static_cast<std::size_t>(std::lround(run.duration_s / dt));
}
std::size_t Scenario::tail_steps() const {
  return static_cast<std::size_t>(std::lround(run.tail_s / dt));
}

void Scenario::set_axis(const std::string& key, const std::string& value) {
  try {
    if (key == "packet_min") {
      packet.delta_p_s = 60.0 * std::stod(value);
    } else if (key == "width_min") {
      // width is the full support, 2 * delta_a
      packet.delta_a_s = 30.0 * std::stod(value);
    } else if (key == "method") {
      method = parse_method(value);
    } else if (key == "horizon") {
      horizon = value == "packet" ? 0 : std::stoi(value);
    } else if (key == "p") {
      mpc.p = std::stoi(value);
    } else if (key == "T_d") {
      mpc.T_d = std::stoi(value);
    } else if (key == "randomize_at") {
      packet.randomize_at = parse_randomize_at(value);
    } else {
      throw InputError("unknown sweep axis '" + key + "'");
    }
  } catch (const std::invalid_argument&) {
    throw InputError("sweep axis " + key + ": cannot parse '" + value + "'");
  }
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(origin + ": " + e.what());
  }
  Scenario sc;
  Obj o(j, origin);
  o.get("schema_version", sc.schema_version);
  if (sc.schema_version != kSchemaVersion)
    throw InputError(origin + ": schema_version " + std::to_string(sc.schema_version) +
                     " is not supported (expected " + std::to_string(kSchemaVersion) + ")");
  o.get("name", sc.name);
  o.get("dt", sc.dt);
  sc.fleet.dt = sc.dt;
  if (const json* f = o.child("fleet")) read_fleet(*f, o.sub("fleet"), sc.fleet);
  if (const json* p = o.child("packet")) {
    Obj q(*p, o.sub("packet"));
    q.get("delta_p_s", sc.packet.delta_p_s);
    q.get("delta_a_s", sc.packet.delta_a_s);
    std::string ra = to_string(sc.packet.randomize_at);
    q.get("randomize_at", ra);
    sc.packet.randomize_at = parse_randomize_at(ra);
    q.finish();
  }
  if (const json* v = o.child("vb")) {
    Obj q(*v, o.sub("vb"));
    q.get("a1", sc.a1);
    q.get("a2", sc.a2);
    q.get("input_delay", sc.input_delay);
    q.finish();
  }
  if (const json* m = o.child("mpc")) {
    Obj q(*m, o.sub("mpc"));
    if (const json* h = q.child("horizon")) {
      if (h->is_string() && h->get<std::string>() == "packet") sc.horizon = 0;
      else if (h->is_number_integer()) sc.horizon = h->get<int>();
      else throw InputError(q.sub("horizon") + ": expected an integer or \"packet\"");
    }
    q.get("p", sc.mpc.p);
    q.get("T_d", sc.mpc.T_d);
    q.get("clamp_to_bounds", sc.mpc.clamp_to_bounds);
    q.get("kkt_tol", sc.mpc.kkt_tol);
    q.get("max_iterations", sc.mpc.solver.max_iterations);
    q.finish();
  }
  std::string method = to_string(sc.method);
  o.get("method", method);
  sc.method = parse_method(method);
  if (const json* s = o.child("signal")) {
    Obj q(*s, o.sub("signal"));
    auto& sg = sc.signal;
    q.get("source", sg.source);
    q.get("files", sg.files);
    q.get("count", sg.count);
    q.get("seed_base", sg.seed_base);
    q.get("bias_mw", sg.bias_mw);
    q.get("amplitude_mw", sg.amplitude_mw);
    q.get("ar_order", sg.ar_order);
    q.get("ar_train_seed", sg.ar_train_seed);
    q.get("ar_train_samples", sg.ar_train_samples);
    if (const json* y = q.child("synth")) {
      Obj w(*y, q.sub("synth"));
      w.get("phi", sg.synth.phi);
      w.get("target_std", sg.synth.target_std);
      w.get("hour_start_boost", sg.synth.hour_start_boost);
      w.get("hour_start_decay_min", sg.synth.hour_start_decay_min);
      w.get("burn_in", sg.synth.burn_in);
      w.finish();
    }
    q.finish();
  }
  if (const json* r = o.child("run")) {
    Obj q(*r, o.sub("run"));
    q.get("warmup_s", sc.run.warmup_s);
    q.get("duration_s", sc.run.duration_s);
    q.get("tail_s", sc.run.tail_s);
    q.get("pjm", sc.run.pjm);
    q.get("seeds", sc.run.seeds);
    q.finish();
  }
  if (const json* s = o.child("scoring")) {
    Obj q(*s, o.sub("scoring"));
    auto& sp = sc.scoring;
    q.get("r0_mw", sp.r0_mw);
    q.get("rr10_fraction", sp.rr10_fraction);
    q.get("treg_mw", sp.treg_mw);
    q.get("areg_mw", sp.areg_mw);
    q.get("r_max", sp.r_max);
    q.get("r_min", sp.r_min);
    q.get("pjm_branch_as_printed", sp.pjm_branch_as_printed);
    q.finish();
  }
  if (const json* s = o.child("sweep")) {
    Obj q(*s, o.sub("sweep"));
    if (const json* axes = q.child("axes")) {
      if (!axes->is_array()) throw InputError(q.sub("axes") + ": expected an array");
      for (const auto& ax : *axes) {
        Obj a(ax, q.sub("axes[]"));
        std::string key;
        std::vector<json> values;
        a.get("key", key);
        a.get("values", values);
        a.finish();
        if (key.empty() || values.empty())
          throw InputError(q.sub("axes[]") + ": needs a key and nonempty values");
        std::vector<std::string> vs;
        for (const auto& v : values) vs.push_back(value_text(v));
        sc.sweep.axes.emplace_back(key, std::move(vs));
      }
    }
    q.finish();
  }
  o.get("output_dir", sc.output_dir);
  o.finish();
  sc.validate();
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.string());
}

std::filesystem::path preset_dir() {
  if (const char* env = std::getenv("PEMREG_PRESETS")) return env;
  return PEMREG_PRESET_DIR;
}

Scenario load_preset(const std::string& name) {
  const auto path = preset_dir() / (name + ".json");
  if (!std::filesystem::exists(path))
    throw InputError("unknown preset '" + name + "' (looked for " + path.string() + ")");
  return load_scenario(path);
}

namespace {

json to_json(const Scenario& sc) {
  json j;
  j["schema_version"] = sc.schema_version;
  j["name"] = sc.name;
  j["dt"] = sc.dt;
  const auto& d = sc.fleet.device;
  j["fleet"] = {{"N", sc.fleet.N},
                {"threads", sc.fleet.threads},
                {"device",
                 {{"z_lo", d.z_lo},
                  {"z_hi", d.z_hi},
                  {"z_set", d.z_set},
                  {"tank_L", d.tank_L},
                  {"tau_s", d.tau_s},
                  {"p_rate_kW", d.p_rate_kW},
                  {"m_R_hz", d.m_R_hz},
                  {"x_amb", d.x_amb}}},
                {"draw",
                 {{"rate_per_hour", sc.fleet.draw.rate_per_hour},
                  {"pulse_kW", sc.fleet.draw.pulse_kW},
                  {"pulse_duration_s", sc.fleet.draw.pulse_duration_s}}}};
  j["packet"] = {{"delta_p_s", sc.packet.delta_p_s},
                 {"delta_a_s", sc.packet.delta_a_s},
                 {"randomize_at", to_string(sc.packet.randomize_at)}};
  j["vb"] = {{"a1", sc.a1}, {"a2", sc.a2}, {"input_delay", sc.input_delay}};
  json h = sc.horizon == 0 ? json("packet") : json(sc.horizon);
  j["mpc"] = {{"horizon", h},
              {"p", sc.mpc.p},
              {"T_d", sc.mpc.T_d},
              {"clamp_to_bounds", sc.mpc.clamp_to_bounds},
              {"kkt_tol", sc.mpc.kkt_tol},
              {"max_iterations", sc.mpc.solver.max_iterations}};
  j["method"] = to_string(sc.method);
  const auto& s = sc.signal;
  j["signal"] = {{"source", s.source},
                 {"files", s.files},
                 {"count", s.count},
                 {"seed_base", s.seed_base},
                 {"bias_mw", s.bias_mw},
                 {"amplitude_mw", s.amplitude_mw},
                 {"ar_order", s.ar_order},
                 {"ar_train_seed", s.ar_train_seed},
                 {"ar_train_samples", s.ar_train_samples},
                 {"synth",
                  {{"phi", s.synth.phi},
                   {"target_std", s.synth.target_std},
                   {"hour_start_boost", s.synth.hour_start_boost},
                   {"hour_start_decay_min", s.synth.hour_start_decay_min},
                   {"burn_in", s.synth.burn_in}}}};
  j["run"] = {{"warmup_s", sc.run.warmup_s},
              {"duration_s", sc.run.duration_s},
              {"tail_s", sc.run.tail_s},
              {"pjm", sc.run.pjm},
              {"seeds", sc.run.seeds}};
  const auto& sp = sc.scoring;
  j["scoring"] = {{"r0_mw", sp.r0_mw},
                  {"rr10_fraction", sp.rr10_fraction},
                  {"treg_mw", sp.treg_mw},
                  {"areg_mw", sp.areg_mw},
                  {"r_max", sp.r_max},
                  {"r_min", sp.r_min},
                  {"pjm_branch_as_printed", sp.pjm_branch_as_printed}};
  json axes = json::array();
  for (const auto& [k, vs] : sc.sweep.axes) axes.push_back({{"key", k}, {"values", vs}});
  j["sweep"] = {{"axes", axes}};
  j["output_dir"] = sc.output_dir;
  return j;
}

}  // namespace

std::string to_json_string(const Scenario& sc, int indent) { return to_json(sc).dump(indent); }

std::string config_hash(const Scenario& sc) {
  // output location and worker count do not change results
  Scenario c = sc;
  c.output_dir.clear();
  c.fleet.threads = 1;
  const std::string text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pemreg
