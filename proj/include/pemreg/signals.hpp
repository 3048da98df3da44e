#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pemreg {

enum class Unit { normalized, megawatt };

/// Uniformly sampled time series. `t0` is the epoch time (seconds, UTC) of
/// the first sample.
struct Series {
  std::vector<double> values;
  double dt = 2.0;
  double t0 = 0.0;
  Unit unit = Unit::normalized;

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
  [[nodiscard]] double operator[](std::size_t k) const { return values[k]; }
  [[nodiscard]] std::span<const double> view() const noexcept { return values; }
  [[nodiscard]] double time_at(std::size_t k) const noexcept {
    return t0 + dt * static_cast<double>(k);
  }

  /// Throws InputError unless dt > 0, the series is nonempty and all values
  /// are finite.
  void validate() const;

  /// Copy of samples [first, first + count).
  [[nodiscard]] Series slice(std::size_t first, std::size_t count) const;
};

/// Pure autoregressive model
///   r[k] = mu + phi_1 r[k-1] + ... + phi_g r[k-g] + a[k],  Var(a) = sigma2.
struct ArModel {
  std::vector<double> phi;
  double mu = 0.0;
  double sigma2 = 0.0;

  [[nodiscard]] std::size_t order() const noexcept { return phi.size(); }
  /// Stationary mean mu / (1 - sum(phi)).
  [[nodiscard]] double process_mean() const;
  /// Roots of 1 - phi_1 z - ... - phi_g z^g.
  [[nodiscard]] std::vector<std::complex<double>> characteristic_roots() const;
  [[nodiscard]] bool is_stationary() const;
};

/// Reads one sample per line. A line is either `value` or
/// `timestamp,value` with an ISO-8601 UTC timestamp. Blank lines and lines
/// starting with '#' are skipped. When timestamps are present they must be
/// spaced exactly `dt` apart; gaps are reported, never interpolated.
[[nodiscard]] Series load_series(const std::filesystem::path& path, double dt);

/// Parses the same format from an in-memory buffer; `origin` names the
/// source in error messages.
[[nodiscard]] Series parse_series(const std::string& text, double dt,
                                  const std::string& origin = "<buffer>");

/// out[k] = bias + amplitude * s[k], tagged as megawatts.
[[nodiscard]] Series scale_to_power(const Series& s, double bias_mw, double amplitude_mw);

/// Sample autocorrelation rho_0..rho_max_lag with the biased (1/N)
/// autocovariance estimator.
[[nodiscard]] std::vector<double> acf(std::span<const double> x, std::size_t max_lag);

/// Partial autocorrelation Phi_11..Phi_LL (index 0 holds lag 1), via the
/// Durbin-Levinson recursion on the sample autocorrelation.
[[nodiscard]] std::vector<double> pacf(std::span<const double> x, std::size_t max_lag);

/// Yule-Walker fit of an AR(order) model. Rejects non-stationary fits.
[[nodiscard]] ArModel fit_ar(std::span<const double> x, std::size_t order);

/// Iterated conditional-mean forecast of the next `steps` samples after
/// the end of `history`.
[[nodiscard]] std::vector<double> forecast(const ArModel& model, std::span<const double> history,
                                           std::size_t steps);

struct ForecastBand {
  std::vector<double> mean;
  std::vector<double> sigma;  ///< one-standard-deviation half-width per step
};

/// Forecast with the innovation-driven standard deviation of each step.
[[nodiscard]] ForecastBand forecast_with_band(const ArModel& model,
                                              std::span<const double> history,
                                              std::size_t steps);

enum class Bucket { minute_of_hour, hour_of_day, day_of_week, month_of_year };

[[nodiscard]] Bucket parse_bucket(const std::string& name);
[[nodiscard]] std::string to_string(Bucket b);

/// Mean within-bucket variance grouped by bucket index. Each occurrence of a
/// bucket (e.g. minute 7 of one particular hour) contributes the variance
/// of its own samples; the profile entry is the average over occurrences.
/// Requires timestamps spanning at least one full bucket cycle.
[[nodiscard]] std::vector<double> variability_profile(const Series& s, Bucket bucket);

/// Generator of Reg-D-like normalized regulation signals: an AR(3) shape
/// with innovations scaled up at the start of every hour, normalized to a
/// target standard deviation and clipped to [-1, 1].
struct RegDSynth {
  std::vector<double> phi{2.547, -2.11535, 0.56829};
  double target_std = 0.55;
  double hour_start_boost = 0.5;    ///< extra innovation scale at minute 0
  double hour_start_decay_min = 4;  ///< e-folding of the boost, minutes
  std::size_t burn_in = 3000;

  /// Generates `n` samples at `dt` starting at epoch `t0`. Deterministic in
  /// (seed, n, dt, t0).
  [[nodiscard]] Series generate(std::uint64_t seed, std::size_t n, double dt, double t0) const;
};

}  // namespace pemreg
