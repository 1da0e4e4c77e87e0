#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "erasure/model.hpp"
#include "erasure/plan.hpp"

namespace erasure {

// Forward pass with `plan` applied; the cache records the plan.
ActivationCache apply_plan(const Model& model, std::span<const TokenId> tokens,
                           const InterventionPlan& plan, ForwardOptions options = {});

// Plan that subtracts the writer's same-run output from the value input of
// each listed eraser head. Throws UsageError unless every eraser sits in a
// layer strictly after the writer's.
InterventionPlan vcomposition_ablation_plan(const ModelConfig& cfg, const ComponentId& writer,
                                            std::span<const ComponentId> erasers);

// Zero-ablates the V-composition path writer -> erasers. Query/key inputs and
// all other components read the unmodified stream.
ActivationCache zero_ablate_vcomposition(const Model& model, std::span<const TokenId> tokens,
                                         const ComponentId& writer,
                                         std::span<const ComponentId> erasers,
                                         ForwardOptions options = {});

// Plan that feeds the target head's query, key and value computations from
// `donor_resid` (the donor run's residual at the head's layer).
InterventionPlan head_input_plan(const ComponentId& target, const Matrix& donor_resid);

// Clean forward where the target head's Q, K and V inputs come from a donor
// run on tokens_donor. Throws UsageError on length mismatch.
ActivationCache head_input_patch(const Model& model, std::span<const TokenId> tokens_clean,
                                 std::span<const TokenId> tokens_donor,
                                 const ComponentId& target, ForwardOptions options = {});

// JSON form: {"edits": [{"point": {...}, "action": {...}, "scope": "all" | [..]}]}.
nlohmann::json plan_to_json(const InterventionPlan& plan);
InterventionPlan plan_from_json(const nlohmann::json& doc);

}  // namespace erasure
