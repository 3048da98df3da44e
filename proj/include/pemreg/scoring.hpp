#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pemreg/signals.hpp"

namespace pemreg {

/// Range-normalized mean absolute error, averaged over the pairs.
[[nodiscard]] double rmae(std::span<const Series> refs, std::span<const Series> outs,
                          double r_max, double r_min);
/// Range-normalized root-mean-square error, averaged over the pairs.
[[nodiscard]] double rrmse(std::span<const Series> refs, std::span<const Series> outs,
                           double r_max, double r_min);

/// Single-pair versions.
[[nodiscard]] double rmae(std::span<const double> r, std::span<const double> y, double r_max,
                          double r_min);
[[nodiscard]] double rrmse(std::span<const double> r, std::span<const double> y, double r_max,
                           double r_min);

/// Basepoint that moves toward r0 by at most rr10 per scoring sample.
[[nodiscard]] Series ramp_limited_basepoint(const Series& r0, double rr10);
[[nodiscard]] Series ramp_limited_basepoint(const Series& r0, std::span<const double> rr10);

/// Non-overlapping block means onto a 10 s grid.
[[nodiscard]] Series to_scoring_grid(const Series& s, double grid_dt = 10.0);

/// Hourly scoring window: 360 samples, plus lookahead for the 240-sample
/// regulation mean.
inline constexpr std::size_t kScoreSamples = 360;
inline constexpr std::size_t kRegMeanWindow = 240;
inline constexpr std::size_t kCorrWindow = 31;
inline constexpr std::size_t kMaxShift = 30;
inline constexpr std::size_t kScoreLookahead = kRegMeanWindow;  // covers k+m+30 as well

/// All series on the scoring grid, in MW.
struct ScoreInputs {
  Series r;
  Series y;
  Series r0;
  std::vector<double> rr10;  ///< one per sample
  std::vector<double> treg;
  std::vector<double> areg;
  double r_max = 4.7;
  double r_min = 2.7;
  /// Keep the accuracy branches exactly as they were printed in the source
  /// spreadsheet transcription (scores 0 whenever TREG is nonzero).
  bool branch_as_printed = false;

  /// Scoring-grid inputs with constant r0, RR10, TREG and AREG.
  [[nodiscard]] static ScoreInputs constant(Series r, Series y, double r0, double rr10,
                                            double treg, double areg, double r_max, double r_min);
};

struct ScoreReport {
  double precision = 0.0;
  double accuracy = 0.0;
  double delay = 0.0;
  double composite = 0.0;
  double rmae = 0.0;
  double rrmse = 0.0;
  std::vector<int> delay_index;  ///< n[k] per scoring sample, -1 where undefined
};

/// Precision, accuracy, delay and composite over the first 360 samples.
/// Inputs must carry at least 360 + 240 samples.
[[nodiscard]] ScoreReport pjm_scores(const ScoreInputs& in);

}  // namespace pemreg
