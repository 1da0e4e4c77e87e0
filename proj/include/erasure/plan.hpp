#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "erasure/ids.hpp"
#include "erasure/kernels.hpp"

namespace erasure {

// Where in the forward pass an edit is applied.
//
// Head-input points edit the pre-LN residual a head reads for its query, key
// or value computation; the head's LN is then recomputed on the edited input.
// Other heads and components keep reading the unmodified stream.
struct HookPoint {
  enum class Kind { ValueInput, QueryInput, KeyInput, ResidAt, ComponentOut };

  Kind kind = Kind::ResidAt;
  int layer = 0;                 // head-input points
  std::vector<int> heads;        // head-input points; must be non-empty
  ResidCheckpoint checkpoint{};  // ResidAt
  ComponentId component{};       // ComponentOut

  static HookPoint value_input(int layer, std::vector<int> heads) {
    return {Kind::ValueInput, layer, std::move(heads), {}, {}};
  }
  static HookPoint query_input(int layer, std::vector<int> heads) {
    return {Kind::QueryInput, layer, std::move(heads), {}, {}};
  }
  static HookPoint key_input(int layer, std::vector<int> heads) {
    return {Kind::KeyInput, layer, std::move(heads), {}, {}};
  }
  static HookPoint resid_at(ResidCheckpoint c) { return {Kind::ResidAt, 0, {}, c, {}}; }
  static HookPoint component_out(ComponentId c) {
    return {Kind::ComponentOut, 0, {}, {}, c};
  }

  bool is_head_input() const {
    return kind == Kind::ValueInput || kind == Kind::QueryInput || kind == Kind::KeyInput;
  }

  // Forward-pass ordering key, comparable with ResidCheckpoint::order().
  int order() const;

  bool operator==(const HookPoint&) const = default;
};

// Subtract the output of `component` computed earlier in the same run.
struct SubtractComponent {
  ComponentId component;
  bool operator==(const SubtractComponent&) const = default;
};

// Overwrite with a tensor (seq x d_model), typically from a donor cache.
struct ReplaceWith {
  Matrix tensor;
  bool operator==(const ReplaceWith&) const = default;
};

struct ZeroOut {
  bool operator==(const ZeroOut&) const = default;
};

using EditAction = std::variant<SubtractComponent, ReplaceWith, ZeroOut>;

struct Edit {
  HookPoint point;
  EditAction action;
  // Positions the edit touches; nullopt means every position.
  std::optional<std::vector<std::size_t>> positions;

  bool operator==(const Edit&) const = default;
};

struct InterventionPlan {
  std::vector<Edit> edits;  // applied in order at each hook point

  bool empty() const { return edits.empty(); }
  // Smallest HookPoint::order() over all edits, or nullopt when empty.
  std::optional<int> earliest_order() const;

  bool operator==(const InterventionPlan&) const = default;
};

// Throws UsageError for out-of-range layers/heads/components or empty head
// sets. Tensor shapes are checked once the sequence length is known.
void validate(const InterventionPlan& plan, const ModelConfig& cfg);

std::string to_string(const HookPoint& p);

}  // namespace erasure
