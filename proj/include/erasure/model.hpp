#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "erasure/ids.hpp"
#include "erasure/kernels.hpp"
#include "erasure/plan.hpp"

namespace erasure {

using TokenId = std::int32_t;

struct ModelConfig {
  int n_layers = 4;
  int d_model = 512;
  int n_heads = 8;
  int d_head = 64;
  int d_mlp = 2048;
  int d_vocab = 0;
  int n_ctx = 1024;
  double ln_eps = 1e-5;
  GeluVariant gelu_variant = GeluVariant::Tanh;

  // Throws DataError unless all counts are positive and n_heads*d_head == d_model.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

std::string to_string(GeluVariant v);
GeluVariant parse_gelu_variant(std::string_view s);

struct LayerNormWeights {
  std::vector<float> gamma;
  std::vector<float> beta;
  bool operator==(const LayerNormWeights&) const = default;
};

struct BlockWeights {
  LayerNormWeights ln1;
  LayerNormWeights ln2;
  // Indexed by head. W_Q/W_K/W_V are d_model x d_head, W_O is d_head x d_model.
  std::vector<Matrix> W_Q, W_K, W_V, W_O;
  std::vector<std::vector<float>> b_Q, b_K, b_V;
  std::vector<float> b_O;
  Matrix W_in;  // d_model x d_mlp
  std::vector<float> b_in;
  Matrix W_out;  // d_mlp x d_model
  std::vector<float> b_out;

  bool operator==(const BlockWeights&) const = default;
};

// Embedding and unembedding are separate tensors.
struct Weights {
  Matrix W_E;    // d_vocab x d_model
  Matrix W_pos;  // n_ctx x d_model
  std::vector<BlockWeights> blocks;
  LayerNormWeights ln_final;
  Matrix W_U;  // d_model x d_vocab
  std::vector<float> b_U;

  bool operator==(const Weights&) const = default;
};

// Immutable after construction; share across threads by const reference.
struct Model {
  ModelConfig config;
  Weights weights;
  std::string name;

  // Throws DataError if any tensor disagrees with config or is non-finite.
  void validate() const;
};

// Zero-initialised weights with the right shapes (LN gammas are 1).
Weights zero_weights(const ModelConfig& cfg);

// Which pre-LN residual a head reads.
enum class HeadInput { Query, Key, Value };

struct ActivationCache {
  std::vector<TokenId> tokens;
  std::map<ResidCheckpoint, Matrix> resid;
  std::map<ComponentId, Matrix> component_out;
  // [layer][head] -> seq x seq, lower triangular.
  std::vector<std::vector<Matrix>> attn_patterns;
  // 1/sqrt(var + eps) of the final layernorm input, per position.
  std::vector<double> final_ln_scale;
  Matrix logits;  // empty when ForwardOptions::compute_logits is false
  // Pre-LN inputs of heads whose input was edited by the plan.
  std::map<std::tuple<int, int, HeadInput>, Matrix> edited_head_inputs;
  std::optional<InterventionPlan> plan;

  std::size_t seq_len() const { return tokens.size(); }

  // Throw UsageError for ids the cache does not hold.
  const Matrix& resid_at(const ResidCheckpoint& c) const;
  const Matrix& output(const ComponentId& c) const;
};

struct ForwardOptions {
  // The unembedding dominates runtime for large vocabularies; analyses that
  // only read the residual stream can skip it.
  bool compute_logits = true;
};

// Pre-LN GPT-2 forward pass with full residual decomposition. When plan is
// non-null its edits are applied at their hook points.
ActivationCache forward(const Model& model, std::span<const TokenId> tokens,
                        const InterventionPlan* plan = nullptr,
                        ForwardOptions options = {});

// The component's additive contribution to the residual stream.
const Matrix& component_output(const ActivationCache& cache, const ComponentId& c);

// Weight interchange file: u64 LE header length, JSON header, raw F32 data.
Model load_weights(const std::filesystem::path& path);
void save_weights(const std::filesystem::path& path, const Model& model);

}  // namespace erasure
