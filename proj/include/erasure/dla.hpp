#pragma once

#include <span>
#include <vector>

#include "erasure/model.hpp"

namespace erasure {

// Logit difference target: token_a minus token_b at `position`.
struct LogitDiffSpec {
  TokenId token_a = 0;
  TokenId token_b = 0;
  std::size_t position = 0;
};

// Direct logit attribution with the final layernorm frozen: the vector is
// mean-centred, multiplied by the cache's final_ln_scale at pos and the LN
// gamma, then mapped through W_U. b_U and the LN beta are not attributed.
//
// `residual_vector` is any residual-space contribution at pos (a component
// output row, or a difference of two of them).
std::vector<double> dla_vector(const Model& model, const ActivationCache& scale_cache,
                               std::span<const float> residual_vector, std::size_t pos);

std::vector<double> dla(const Model& model, const ActivationCache& cache,
                        const ComponentId& c, std::size_t pos);

// The constant row: LN beta . W_U + b_U.
std::vector<double> dla_constant(const Model& model);

double logit_diff(const Model& model, const ActivationCache& scale_cache,
                  std::span<const float> residual_vector, const LogitDiffSpec& spec);

double logit_diff(const Model& model, const ActivationCache& cache, const ComponentId& c,
                  const LogitDiffSpec& spec);

// Model logit difference read from the cache's logits.
double model_logit_diff(const ActivationCache& cache, const LogitDiffSpec& spec);

// Two highest logits at pos; ties go to the lower token id.
LogitDiffSpec top2(const ActivationCache& cache, std::size_t pos);

struct ErasureDla {
  double writer_dla = 0.0;
  double erasure_dla = 0.0;
};

// writer_dla is the writer's logit difference on the clean run. erasure_dla
// sums, over erasers, the logit difference of (clean output - patched
// output), where the patched run zero-ablates writer -> eraser V-composition.
// Both use the clean run's frozen LN scale.
ErasureDla erasure_isolated_dla(const Model& model, const ActivationCache& clean,
                                const ActivationCache& patched, const ComponentId& writer,
                                std::span<const ComponentId> erasers, const LogitDiffSpec& spec);

// Convenience form that runs the clean and patched forwards itself.
ErasureDla erasure_isolated_dla(const Model& model, std::span<const TokenId> tokens,
                                const ComponentId& writer, std::span<const ComponentId> erasers,
                                const LogitDiffSpec& spec);

}  // namespace erasure
