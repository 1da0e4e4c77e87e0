#include "erasure/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "erasure/error.hpp"

namespace erasure {

std::optional<double> try_projection_ratio(std::span<const float> a, std::span<const float> b,
                                           double eps_b) {
  if (a.size() != b.size()) {
    throw UsageError("projection_ratio: length mismatch " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  }
  double ab = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double bi = b[i];
    ab += static_cast<double>(a[i]) * bi;
    bb += bi * bi;
  }
  if (!(bb >= eps_b)) return std::nullopt;
  return ab / bb;
}

double projection_ratio(std::span<const float> a, std::span<const float> b, double eps_b) {
  const auto pr = try_projection_ratio(a, b, eps_b);
  if (!pr) {
    throw DegenerateReference("projection_ratio: ||b||^2 below " + std::to_string(eps_b));
  }
  return *pr;
}

namespace {

PositionRatios ratios_by_row(const Matrix& a, const Matrix& b, double eps_b) {
  PositionRatios out(a.rows());
  for (std::size_t t = 0; t < a.rows(); ++t) out[t] = try_projection_ratio(a.row(t), b.row(t), eps_b);
  return out;
}

}  // namespace

std::map<ResidCheckpoint, PositionRatios> resid_trace(const ActivationCache& cache,
                                                      const ComponentId& c, double eps_b) {
  const Matrix& ref = cache.output(c);
  std::map<ResidCheckpoint, PositionRatios> out;
  for (const auto& [k, resid] : cache.resid) out[k] = ratios_by_row(resid, ref, eps_b);
  return out;
}

std::map<ComponentId, PositionRatios> component_projection_matrix(
    const ActivationCache& cache, const ComponentId& target,
    std::span<const ComponentId> candidates, double eps_b) {
  const Matrix& ref = cache.output(target);
  std::map<ComponentId, PositionRatios> out;
  for (const auto& c : candidates) out[c] = ratios_by_row(cache.output(c), ref, eps_b);
  return out;
}

Matrix summed_output(const ActivationCache& cache, std::span<const ComponentId> group) {
  if (group.empty()) throw UsageError("summed_output: empty component group");
  Matrix sum = cache.output(group.front());
  for (std::size_t i = 1; i < group.size(); ++i) add_in_place(sum, cache.output(group[i]));
  return sum;
}

PositionRatios summed_projection(const ActivationCache& cache, const ComponentId& target,
                                 std::span<const ComponentId> group, double eps_b) {
  return ratios_by_row(summed_output(cache, group), cache.output(target), eps_b);
}

double quantile(std::vector<double> samples, double q) {
  if (samples.empty()) throw UsageError("quantile: empty input");
  std::sort(samples.begin(), samples.end());
  const double h = (static_cast<double>(samples.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, samples.size() - 1);
  return samples[lo] + (h - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
}

QuantileSummary aggregate(std::span<const double> samples) {
  if (samples.empty()) throw UsageError("aggregate: no samples");
  std::vector<double> v(samples.begin(), samples.end());
  QuantileSummary s;
  s.n = v.size();
  s.q25 = quantile(v, 0.25);
  s.median = quantile(v, 0.5);
  s.q75 = quantile(v, 0.75);
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  return s;
}

void pool_ratios(const PositionRatios& ratios, bool include_pos0, std::vector<double>& out,
                 std::size_t* excluded) {
  for (std::size_t t = include_pos0 ? 0 : 1; t < ratios.size(); ++t) {
    if (ratios[t]) {
      out.push_back(*ratios[t]);
    } else if (excluded != nullptr) {
      ++*excluded;
    }
  }
}

std::vector<ComponentId> identify_erasers(const std::map<ComponentId, QuantileSummary>& summaries,
                                          double threshold) {
  std::vector<std::pair<double, ComponentId>> hits;
  for (const auto& [c, s] : summaries) {
    if (s.q75 < -threshold) hits.emplace_back(s.median, c);
  }
  std::sort(hits.begin(), hits.end());
  std::vector<ComponentId> out;
  for (const auto& h : hits) out.push_back(h.second);
  return out;
}

FitResult fit_correlation(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw UsageError("fit_correlation: xs and ys differ in length");
  }
  if (xs.size() < 2) throw UsageError("fit_correlation: need at least 2 points");
  const auto n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw NumericError("fit_correlation: zero variance in " +
                       std::string(!(sxx > 0.0) ? "xs" : "ys"));
  }
  FitResult r;
  r.n = xs.size();
  r.pearson_r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  return r;
}

}  // namespace erasure
