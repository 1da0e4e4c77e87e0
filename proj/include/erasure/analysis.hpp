#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "erasure/model.hpp"

namespace erasure {

inline constexpr double kDefaultEpsB = 1e-12;
inline constexpr double kDefaultEraserThreshold = 0.05;

// PR(a, b) = (a . b) / ||b||^2, the signed amount of direction b present in
// a. Throws DegenerateReference when ||b||^2 < eps_b.
double projection_ratio(std::span<const float> a, std::span<const float> b,
                        double eps_b = kDefaultEpsB);

// Same as projection_ratio but returns nullopt for a degenerate reference.
std::optional<double> try_projection_ratio(std::span<const float> a,
                                           std::span<const float> b,
                                           double eps_b = kDefaultEpsB);

// One entry per position; nullopt marks a position excluded because the
// reference row was degenerate.
using PositionRatios = std::vector<std::optional<double>>;

// PR(resid[k][pos], out[c][pos]) for every checkpoint k present in the cache.
std::map<ResidCheckpoint, PositionRatios> resid_trace(const ActivationCache& cache,
                                                      const ComponentId& c,
                                                      double eps_b = kDefaultEpsB);

// PR(out[candidate][pos], out[target][pos]) per candidate. A candidate that
// fully cancels the target reads -1 in this orientation.
std::map<ComponentId, PositionRatios> component_projection_matrix(
    const ActivationCache& cache, const ComponentId& target,
    std::span<const ComponentId> candidates, double eps_b = kDefaultEpsB);

// PR(sum of group outputs, target output) per position.
PositionRatios summed_projection(const ActivationCache& cache, const ComponentId& target,
                                 std::span<const ComponentId> group,
                                 double eps_b = kDefaultEpsB);

// Sum of the outputs of a group of components.
Matrix summed_output(const ActivationCache& cache, std::span<const ComponentId> group);

struct QuantileSummary {
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double mean = 0.0;
  std::size_t n = 0;
};

// Empirical quantile with linear interpolation between order statistics
// (position (n-1)*q in the sorted sample).
double quantile(std::vector<double> samples, double q);

// Throws UsageError on empty input.
QuantileSummary aggregate(std::span<const double> samples);

// Pools per-position ratios into a flat sample list, dropping excluded
// positions and (unless include_pos0) position 0. `excluded` counts the
// degenerate positions that were dropped.
void pool_ratios(const PositionRatios& ratios, bool include_pos0, std::vector<double>& out,
                 std::size_t* excluded = nullptr);

// Components whose q75 < -threshold, sorted by median ascending.
std::vector<ComponentId> identify_erasers(const std::map<ComponentId, QuantileSummary>& summaries,
                                          double threshold = kDefaultEraserThreshold);

struct FitResult {
  double pearson_r = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t n = 0;
};

// Pearson r and OLS fit of ys on xs. Throws NumericError on zero variance.
FitResult fit_correlation(std::span<const double> xs, std::span<const double> ys);

}  // namespace erasure
