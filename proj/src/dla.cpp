#include "erasure/dla.hpp"

#include <string>

#include "erasure/error.hpp"
#include "erasure/interventions.hpp"

namespace erasure {

namespace {

void check_position(const ActivationCache& cache, std::size_t pos) {
  if (pos >= cache.seq_len()) {
    throw UsageError("position " + std::to_string(pos) + " out of range for sequence length " +
                     std::to_string(cache.seq_len()));
  }
}

void check_token(const Model& model, TokenId t) {
  if (t < 0 || t >= model.config.d_vocab) {
    throw UsageError("token id " + std::to_string(t) + " out of range");
  }
}

// Centred, frozen-scale, gamma-folded residual vector.
std::vector<double> folded(const Model& model, const ActivationCache& scale_cache,
                           std::span<const float> v, std::size_t pos) {
  check_position(scale_cache, pos);
  if (v.size() != static_cast<std::size_t>(model.config.d_model)) {
    throw UsageError("DLA input has length " + std::to_string(v.size()) + ", expected d_model");
  }
  const double mu = mean(v);
  const double scale = scale_cache.final_ln_scale.at(pos);
  const auto& gamma = model.weights.ln_final.gamma;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mu) * scale * gamma[i];
  return out;
}

}  // namespace

std::vector<double> dla_vector(const Model& model, const ActivationCache& scale_cache,
                               std::span<const float> residual_vector, std::size_t pos) {
  const auto x = folded(model, scale_cache, residual_vector, pos);
  const Matrix& wu = model.weights.W_U;
  std::vector<double> out(wu.cols(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) continue;
    const auto row = wu.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += x[i] * row[j];
  }
  return out;
}

std::vector<double> dla(const Model& model, const ActivationCache& cache, const ComponentId& c,
                        std::size_t pos) {
  check_position(cache, pos);
  return dla_vector(model, cache, cache.output(c).row(pos), pos);
}

std::vector<double> dla_constant(const Model& model) {
  const auto& beta = model.weights.ln_final.beta;
  const Matrix& wu = model.weights.W_U;
  std::vector<double> out(model.weights.b_U.begin(), model.weights.b_U.end());
  for (std::size_t i = 0; i < beta.size(); ++i) {
    const auto row = wu.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += static_cast<double>(beta[i]) * row[j];
  }
  return out;
}

double logit_diff(const Model& model, const ActivationCache& scale_cache,
                  std::span<const float> residual_vector, const LogitDiffSpec& spec) {
  check_token(model, spec.token_a);
  check_token(model, spec.token_b);
  const auto x = folded(model, scale_cache, residual_vector, spec.position);
  const Matrix& wu = model.weights.W_U;
  double diff = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    diff += x[i] * (static_cast<double>(wu(i, spec.token_a)) - wu(i, spec.token_b));
  }
  return diff;
}

double logit_diff(const Model& model, const ActivationCache& cache, const ComponentId& c,
                  const LogitDiffSpec& spec) {
  check_position(cache, spec.position);
  return logit_diff(model, cache, cache.output(c).row(spec.position), spec);
}

double model_logit_diff(const ActivationCache& cache, const LogitDiffSpec& spec) {
  check_position(cache, spec.position);
  if (cache.logits.empty()) throw UsageError("cache was computed without logits");
  return static_cast<double>(cache.logits(spec.position, spec.token_a)) -
         cache.logits(spec.position, spec.token_b);
}

LogitDiffSpec top2(const ActivationCache& cache, std::size_t pos) {
  check_position(cache, pos);
  if (cache.logits.empty()) throw UsageError("cache was computed without logits");
  const auto row = cache.logits.row(pos);
  if (row.size() < 2) throw UsageError("top2 needs a vocabulary of at least 2 tokens");
  // Strict comparisons keep the earliest (lowest) id on ties.
  std::size_t best = 0, second = 1;
  if (row[1] > row[0]) std::swap(best, second);
  for (std::size_t j = 2; j < row.size(); ++j) {
    if (row[j] > row[best]) {
      second = best;
      best = j;
    } else if (row[j] > row[second]) {
      second = j;
    }
  }
  return {static_cast<TokenId>(best), static_cast<TokenId>(second), pos};
}

ErasureDla erasure_isolated_dla(const Model& model, const ActivationCache& clean,
                                const ActivationCache& patched, const ComponentId& writer,
                                std::span<const ComponentId> erasers,
                                const LogitDiffSpec& spec) {
  ErasureDla out;
  out.writer_dla = logit_diff(model, clean, writer, spec);
  const std::size_t pos = spec.position;
  for (const auto& e : erasers) {
    const auto c = clean.output(e).row(pos);
    const auto p = patched.output(e).row(pos);
    std::vector<float> diff(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) diff[i] = c[i] - p[i];
    out.erasure_dla += logit_diff(model, clean, diff, spec);
  }
  return out;
}

ErasureDla erasure_isolated_dla(const Model& model, std::span<const TokenId> tokens,
                                const ComponentId& writer, std::span<const ComponentId> erasers,
                                const LogitDiffSpec& spec) {
  const auto clean = forward(model, tokens);
  const auto patched =
      zero_ablate_vcomposition(model, tokens, writer, erasers, {.compute_logits = false});
  if (!(patched.output(writer) == clean.output(writer))) {
    throw NumericError("writer output differs between clean and patched runs");
  }
  return erasure_isolated_dla(model, clean, patched, writer, erasers, spec);
}

}  // namespace erasure
