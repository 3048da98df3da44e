#include "pemreg/signals.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "pemreg/error.hpp"

namespace pemreg {

namespace {

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& token, const std::string& origin, std::size_t line) {
  const std::string t = trim(token);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw InputError(origin + ":" + std::to_string(line) + ": cannot parse '" + t +
                     "' as a number");
  }
  if (used != t.size())
    throw InputError(origin + ":" + std::to_string(line) + ": trailing characters in '" + t +
                     "'");
  if (!std::isfinite(v))
    throw InputError(origin + ":" + std::to_string(line) + ": non-finite value '" + t + "'");
  return v;
}

// ISO-8601 "YYYY-MM-DD[T ]HH:MM:SS[.fff][Z]" interpreted as UTC.
double parse_timestamp(const std::string& token, const std::string& origin, std::size_t line) {
  const std::string t = trim(token);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double s = 0.0;
  char sep = 0;
  int consumed = 0;
  const int n = std::sscanf(t.c_str(), "%4d-%2d-%2d%c%2d:%2d:%lf%n", &y, &mo, &d, &sep, &h, &mi,
                            &s, &consumed);
  const bool tail_ok = consumed == static_cast<int>(t.size()) ||
                       (consumed + 1 == static_cast<int>(t.size()) && t.back() == 'Z');
  if (n != 7 || (sep != 'T' && sep != ' ') || !tail_ok)
    throw InputError(origin + ":" + std::to_string(line) + ": bad ISO-8601 timestamp '" + t +
                     "'");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok())
    throw InputError(origin + ":" + std::to_string(line) + ": invalid date '" + t + "'");
  const auto days_since_epoch = sys_days{ymd}.time_since_epoch().count();
  return static_cast<double>(days_since_epoch) * 86400.0 + h * 3600.0 + mi * 60.0 + s;
}

}  // namespace

void Series::validate() const {
  if (!(dt > 0.0)) throw InputError("series sample period must be positive");
  if (values.empty()) throw InputError("series is empty");
  for (std::size_t k = 0; k < values.size(); ++k)
    if (!std::isfinite(values[k]))
      throw InputError("series value at index " + std::to_string(k) + " is not finite");
}

Series Series::slice(std::size_t first, std::size_t count) const {
  if (first + count > values.size()) throw InputError("series slice out of range");
  Series out{{values.begin() + static_cast<std::ptrdiff_t>(first),
              values.begin() + static_cast<std::ptrdiff_t>(first + count)},
             dt, time_at(first), unit};
  return out;
}

double ArModel::process_mean() const {
  const double s = std::accumulate(phi.begin(), phi.end(), 0.0);
  return mu / (1.0 - s);
}

std::vector<std::complex<double>> ArModel::characteristic_roots() const {
  const auto g = static_cast<Eigen::Index>(phi.size());
  if (g == 0) return {};
  // Roots z_i of 1 - sum phi_i z^i are reciprocals of the eigenvalues of the
  // companion matrix of the recursion.
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(g, g);
  for (Eigen::Index i = 0; i < g; ++i) companion(0, i) = phi[static_cast<std::size_t>(i)];
  for (Eigen::Index i = 1; i < g; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  std::vector<std::complex<double>> roots;
  for (Eigen::Index i = 0; i < g; ++i) {
    const std::complex<double> lam = es.eigenvalues()(i);
    roots.push_back(std::abs(lam) == 0.0
                        ? std::complex<double>(std::numeric_limits<double>::infinity(), 0.0)
                        : 1.0 / lam);
  }
  return roots;
}

bool ArModel::is_stationary() const {
  for (const auto& z : characteristic_roots())
    if (!(std::abs(z) > 1.0)) return false;
  return true;
}

Series parse_series(const std::string& text, double dt, const std::string& origin) {
  if (!(dt > 0.0)) throw InputError("sample period must be positive");
  Series s;
  s.dt = dt;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  bool have_time = false;
  bool first = true;
  double last_time = 0.0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string l = trim(raw);
    if (l.empty() || l.front() == '#') continue;
    const auto comma = l.find(',');
    if (comma == std::string::npos) {
      if (!first && have_time)
        throw InputError(origin + ":" + std::to_string(line) + ": missing timestamp column");
      s.values.push_back(parse_real(l, origin, line));
    } else {
      if (!first && !have_time)
        throw InputError(origin + ":" + std::to_string(line) + ": unexpected timestamp column");
      const double t = parse_timestamp(l.substr(0, comma), origin, line);
      if (first) {
        s.t0 = t;
      } else if (std::abs(t - last_time - dt) > 1e-6) {
        throw InputError(origin + ":" + std::to_string(line) + ": expected a sample " +
                         std::to_string(dt) + " s after the previous one, gap is " +
                         std::to_string(t - last_time) + " s (missing samples are not filled)");
      }
      have_time = true;
      last_time = t;
      s.values.push_back(parse_real(l.substr(comma + 1), origin, line));
    }
    first = false;
  }
  if (s.values.empty()) throw InputError(origin + ": no samples");
  return s;
}

Series load_series(const std::filesystem::path& path, double dt) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_series(buf.str(), dt, path.string());
}

Series scale_to_power(const Series& s, double bias_mw, double amplitude_mw) {
  Series out = s;
  for (double& v : out.values) v = bias_mw + amplitude_mw * v;
  out.unit = Unit::megawatt;
  return out;
}

std::vector<double> acf(std::span<const double> x, std::size_t max_lag) {
  const std::size_t n = x.size();
  if (n == 0 || max_lag >= n)
    throw InputError("acf: need more samples than the maximum lag (" + std::to_string(n) +
                     " samples, lag " + std::to_string(max_lag) + ")");
  const double m = mean_of(x);
  std::vector<double> gamma(max_lag + 1, 0.0);
  for (std::size_t l = 0; l <= max_lag; ++l) {
    double acc = 0.0;
    for (std::size_t k = l; k < n; ++k) acc += (x[k] - m) * (x[k - l] - m);
    gamma[l] = acc / static_cast<double>(n);
  }
  if (!(gamma[0] > 0.0)) throw NumericalError("acf: series has zero variance");
  std::vector<double> rho(max_lag + 1);
  rho[0] = 1.0;
  for (std::size_t l = 1; l <= max_lag; ++l) rho[l] = gamma[l] / gamma[0];
  return rho;
}

std::vector<double> pacf(std::span<const double> x, std::size_t max_lag) {
  const auto rho = acf(x, max_lag);
  std::vector<double> out;
  out.reserve(max_lag);
  std::vector<double> phi;  // phi_{l,1..l}
  double err = 1.0;         // normalized prediction error variance
  for (std::size_t l = 1; l <= max_lag; ++l) {
    double num = rho[l];
    for (std::size_t j = 1; j < l; ++j) num -= phi[j - 1] * rho[l - j];
    if (!(err > 1e-12))
      throw NumericalError("pacf: Toeplitz system is singular at lag " + std::to_string(l));
    const double kappa = num / err;
    std::vector<double> next(l);
    for (std::size_t j = 1; j < l; ++j) next[j - 1] = phi[j - 1] - kappa * phi[l - j - 1];
    next[l - 1] = kappa;
    phi = std::move(next);
    err *= (1.0 - kappa * kappa);
    out.push_back(kappa);
  }
  return out;
}

ArModel fit_ar(std::span<const double> x, std::size_t order) {
  if (order == 0) throw InputError("fit_ar: order must be positive");
  if (x.size() < 10 * order)
    throw InputError("fit_ar: need at least " + std::to_string(10 * order) + " samples");
  if (std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) == x.end())
    throw InputError("fit_ar: series is constant");
  const auto rho = acf(x, order);
  const auto g = static_cast<Eigen::Index>(order);
  Eigen::MatrixXd toeplitz(g, g);
  Eigen::VectorXd rhs(g);
  for (Eigen::Index i = 0; i < g; ++i) {
    rhs(i) = rho[static_cast<std::size_t>(i + 1)];
    for (Eigen::Index j = 0; j < g; ++j) toeplitz(i, j) = rho[static_cast<std::size_t>(std::abs(i - j))];
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(toeplitz);
  if (!lu.isInvertible()) throw NumericalError("fit_ar: Yule-Walker system is singular");
  const Eigen::VectorXd sol = lu.solve(rhs);

  ArModel m;
  m.phi.assign(sol.data(), sol.data() + g);
  const double xm = mean_of(x);
  double gamma0 = 0.0;
  for (double v : x) gamma0 += (v - xm) * (v - xm);
  gamma0 /= static_cast<double>(x.size());
  double explained = 0.0;
  for (Eigen::Index i = 0; i < g; ++i) explained += sol(i) * rhs(i);
  m.sigma2 = std::max(0.0, gamma0 * (1.0 - explained));
  m.mu = xm * (1.0 - sol.sum());

  if (!m.is_stationary()) {
    std::ostringstream msg;
    msg << "fit_ar: fitted model is not stationary; characteristic roots";
    for (const auto& z : m.characteristic_roots())
      if (!(std::abs(z) > 1.0)) msg << ' ' << z << " (|z|=" << std::abs(z) << ')';
    msg << " lie on or inside the unit circle";
    throw NumericalError(msg.str());
  }
  return m;
}

std::vector<double> forecast(const ArModel& model, std::span<const double> history,
                             std::size_t steps) {
  const std::size_t g = model.order();
  if (history.size() < g)
    throw InputError("forecast: history shorter than model order");
  std::vector<double> buf(history.end() - static_cast<std::ptrdiff_t>(g), history.end());
  std::vector<double> out;
  out.reserve(steps);
  for (std::size_t h = 0; h < steps; ++h) {
    double v = model.mu;
    for (std::size_t i = 0; i < g; ++i) v += model.phi[i] * buf[buf.size() - 1 - i];
    out.push_back(v);
    buf.push_back(v);
  }
  return out;
}

ForecastBand forecast_with_band(const ArModel& model, std::span<const double> history,
                                std::size_t steps) {
  ForecastBand band;
  band.mean = forecast(model, history, steps);
  // psi weights of the MA(infinity) representation
  std::vector<double> psi{1.0};
  double acc = 0.0;
  for (std::size_t h = 0; h < steps; ++h) {
    acc += psi[h] * psi[h];
    band.sigma.push_back(std::sqrt(model.sigma2 * acc));
    double next = 0.0;
    for (std::size_t i = 0; i < model.order() && i <= h; ++i) next += model.phi[i] * psi[h - i];
    psi.push_back(next);
  }
  return band;
}

Bucket parse_bucket(const std::string& name) {
  if (name == "minute-of-hour") return Bucket::minute_of_hour;
  if (name == "hour-of-day") return Bucket::hour_of_day;
  if (name == "day-of-week") return Bucket::day_of_week;
  if (name == "month-of-year") return Bucket::month_of_year;
  throw InputError("unknown bucket '" + name + "'");
}

std::string to_string(Bucket b) {
  switch (b) {
    case Bucket::minute_of_hour: return "minute-of-hour";
    case Bucket::hour_of_day: return "hour-of-day";
    case Bucket::day_of_week: return "day-of-week";
    case Bucket::month_of_year: return "month-of-year";
  }
  return "?";
}

std::vector<double> variability_profile(const Series& s, Bucket bucket) {
  s.validate();
  using namespace std::chrono;
  std::size_t count = 0;
  double cycle = 0.0;
  switch (bucket) {
    case Bucket::minute_of_hour: count = 60; cycle = 3600.0; break;
    case Bucket::hour_of_day: count = 24; cycle = 86400.0; break;
    case Bucket::day_of_week: count = 7; cycle = 7 * 86400.0; break;
    case Bucket::month_of_year: count = 12; cycle = 365 * 86400.0; break;
  }
  const double span = s.dt * static_cast<double>(s.size());
  if (span + 1e-9 < cycle)
    throw InputError("variability_profile: series spans " + std::to_string(span) +
                     " s, shorter than one " + to_string(bucket) + " cycle");

  // occurrence id -> (bucket index, samples)
  struct Occurrence {
    std::size_t index;
    double sum = 0, sum_sq = 0;
    std::size_t n = 0;
  };
  std::map<std::int64_t, Occurrence> occ;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double t = s.time_at(k);
    const auto secs = static_cast<std::int64_t>(std::floor(t));
    std::int64_t id = 0;
    std::size_t idx = 0;
    switch (bucket) {
      case Bucket::minute_of_hour:
        id = secs / 60;
        idx = static_cast<std::size_t>(((secs / 60) % 60 + 60) % 60);
        break;
      case Bucket::hour_of_day:
        id = secs / 3600;
        idx = static_cast<std::size_t>(((secs / 3600) % 24 + 24) % 24);
        break;
      case Bucket::day_of_week: {
        const auto d = static_cast<std::int64_t>(std::floor(t / 86400.0));
        id = d;
        idx = static_cast<std::size_t>(((d + 4) % 7 + 7) % 7);  // 1970-01-01 was a Thursday; 0 = Sunday
        break;
      }
      case Bucket::month_of_year: {
        const sys_days day{days{static_cast<int>(std::floor(t / 86400.0))}};
        const year_month_day ymd{day};
        idx = static_cast<unsigned>(ymd.month()) - 1;
        id = static_cast<int>(ymd.year()) * 12 + static_cast<std::int64_t>(idx);
        break;
      }
    }
    auto& o = occ.try_emplace(id, Occurrence{idx}).first->second;
    o.sum += s[k];
    o.sum_sq += s[k] * s[k];
    ++o.n;
  }
  std::vector<double> total(count, 0.0);
  std::vector<std::size_t> n_occ(count, 0);
  for (const auto& [id, o] : occ) {
    if (o.n < 2) continue;
    const double m = o.sum / static_cast<double>(o.n);
    const double var = std::max(0.0, o.sum_sq / static_cast<double>(o.n) - m * m);
    total[o.index] += var;
    ++n_occ[o.index];
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (n_occ[i] == 0)
      throw InputError("variability_profile: no samples fall in " + to_string(bucket) +
                       " bucket " + std::to_string(i));
    total[i] /= static_cast<double>(n_occ[i]);
  }
  return total;
}

Series RegDSynth::generate(std::uint64_t seed, std::size_t n, double dt, double t0) const {
  if (!(dt > 0.0)) throw InputError("RegDSynth: dt must be positive");
  const std::size_t g = phi.size();
  // stationary standard deviation of the unit-innovation process
  double var = 0.0;
  {
    std::vector<double> psi{1.0};
    for (std::size_t h = 0; h < 20000; ++h) {
      var += psi[h] * psi[h];
      double next = 0.0;
      for (std::size_t i = 0; i < g && i <= h; ++i) next += phi[i] * psi[h - i];
      psi.push_back(next);
    }
  }
  const double scale = target_std / std::sqrt(var);

  std::mt19937_64 eng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(burn_in + n, 0.0);
  const auto total = static_cast<std::ptrdiff_t>(burn_in + n);
  for (std::ptrdiff_t k = 0; k < total; ++k) {
    const double t = t0 + dt * static_cast<double>(k - static_cast<std::ptrdiff_t>(burn_in));
    const double minute = std::fmod(std::fmod(t, 3600.0) + 3600.0, 3600.0) / 60.0;
    const double boost = 1.0 + hour_start_boost * std::exp(-minute / hour_start_decay_min);
    double v = normal(eng) * boost;
    for (std::size_t i = 0; i < g; ++i)
      if (k - 1 - static_cast<std::ptrdiff_t>(i) >= 0)
        v += phi[i] * x[static_cast<std::size_t>(k - 1 - static_cast<std::ptrdiff_t>(i))];
    x[static_cast<std::size_t>(k)] = v;
  }
  Series s;
  s.dt = dt;
  s.t0 = t0;
  s.unit = Unit::normalized;
  s.values.reserve(n);
  for (std::size_t k = 0; k < n; ++k) s.values.push_back(std::clamp(x[burn_in + k] * scale, -1.0, 1.0));
  return s;
}

}  // namespace pemreg
