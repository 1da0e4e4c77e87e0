#pragma once

#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace erasure {

struct ModelConfig;

// A writer of the residual stream. Heads exclude the attention output bias,
// which is its own AttnBias component.
struct ComponentId {
  enum class Kind { Embed, PosEmbed, Head, AttnBias, Mlp };

  Kind kind = Kind::Embed;
  int layer = -1;
  int head = -1;

  static ComponentId embed() { return {Kind::Embed, -1, -1}; }
  static ComponentId pos_embed() { return {Kind::PosEmbed, -1, -1}; }
  static ComponentId attn_head(int layer, int head) { return {Kind::Head, layer, head}; }
  static ComponentId attn_bias(int layer) { return {Kind::AttnBias, layer, -1}; }
  static ComponentId mlp(int layer) { return {Kind::Mlp, layer, -1}; }

  bool is_head() const { return kind == Kind::Head; }

  // Layer at which the output enters the stream; embeddings count as -1.
  int write_layer() const { return layer; }

  auto operator<=>(const ComponentId&) const = default;
};

// "L<layer>H<head>", "MLP<layer>", "BIAS<layer>", "EMB", "POS".
std::string to_string(const ComponentId& c);

// Case-insensitive inverse of to_string. Throws UsageError on bad syntax.
ComponentId parse_component(std::string_view text);

// Throws UsageError when the id is out of range for cfg.
void validate(const ComponentId& c, const ModelConfig& cfg);

// Every component in residual write order: EMB, POS, then per layer all
// heads, BIAS, MLP.
std::vector<ComponentId> all_components(const ModelConfig& cfg);

struct ResidCheckpoint {
  enum class Kind { PreAttn, Mid, Post };

  Kind kind = Kind::PreAttn;
  int layer = 0;

  static ResidCheckpoint pre(int layer) { return {Kind::PreAttn, layer}; }
  static ResidCheckpoint mid(int layer) { return {Kind::Mid, layer}; }
  static ResidCheckpoint post(int layer) { return {Kind::Post, layer}; }

  // Position in the forward pass: pre_n < mid_n < post_n < pre_{n+1}.
  int order() const { return 3 * layer + static_cast<int>(kind); }

  auto operator<=>(const ResidCheckpoint& o) const { return order() <=> o.order(); }
  bool operator==(const ResidCheckpoint& o) const { return order() == o.order(); }
};

// "resid_pre_<n>", "resid_mid_<n>", "resid_post_<n>".
std::string to_string(const ResidCheckpoint& c);
ResidCheckpoint parse_checkpoint(std::string_view text);
void validate(const ResidCheckpoint& c, const ModelConfig& cfg);

// resid_pre_0, then resid_mid_n and resid_post_n per layer. resid_pre_n for
// n > 0 is omitted since it equals resid_post_{n-1}.
std::vector<ResidCheckpoint> trace_checkpoints(const ModelConfig& cfg);

// True when component c has been added to the stream by checkpoint k.
bool written_before(const ComponentId& c, const ResidCheckpoint& k);

}  // namespace erasure
