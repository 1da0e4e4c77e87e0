#include "erasure/interventions.hpp"

#include <algorithm>
#include <map>

#include "erasure/error.hpp"

namespace erasure {

using json = nlohmann::json;

ActivationCache apply_plan(const Model& model, std::span<const TokenId> tokens,
                           const InterventionPlan& plan, ForwardOptions options) {
  return forward(model, tokens, &plan, options);
}

InterventionPlan vcomposition_ablation_plan(const ModelConfig& cfg, const ComponentId& writer,
                                            std::span<const ComponentId> erasers) {
  validate(writer, cfg);
  std::map<int, std::vector<int>> by_layer;
  for (const auto& e : erasers) {
    validate(e, cfg);
    if (!e.is_head()) {
      throw UsageError("eraser " + to_string(e) + " is not an attention head");
    }
    if (e.layer <= writer.write_layer()) {
      throw UsageError("writer " + to_string(writer) + " is not upstream of eraser " +
                       to_string(e));
    }
    auto& heads = by_layer[e.layer];
    if (std::find(heads.begin(), heads.end(), e.head) == heads.end()) heads.push_back(e.head);
  }
  InterventionPlan plan;
  for (auto& [layer, heads] : by_layer) {
    plan.edits.push_back(
        {HookPoint::value_input(layer, heads), SubtractComponent{writer}, std::nullopt});
  }
  return plan;
}

ActivationCache zero_ablate_vcomposition(const Model& model, std::span<const TokenId> tokens,
                                         const ComponentId& writer,
                                         std::span<const ComponentId> erasers,
                                         ForwardOptions options) {
  const auto plan = vcomposition_ablation_plan(model.config, writer, erasers);
  return forward(model, tokens, &plan, options);
}

InterventionPlan head_input_plan(const ComponentId& target, const Matrix& donor_resid) {
  if (!target.is_head()) {
    throw UsageError("head input patch target " + to_string(target) + " is not a head");
  }
  InterventionPlan plan;
  for (auto point : {HookPoint::query_input(target.layer, {target.head}),
                     HookPoint::key_input(target.layer, {target.head}),
                     HookPoint::value_input(target.layer, {target.head})}) {
    plan.edits.push_back({std::move(point), ReplaceWith{donor_resid}, std::nullopt});
  }
  return plan;
}

ActivationCache head_input_patch(const Model& model, std::span<const TokenId> tokens_clean,
                                 std::span<const TokenId> tokens_donor,
                                 const ComponentId& target, ForwardOptions options) {
  validate(target, model.config);
  if (tokens_clean.size() != tokens_donor.size()) {
    throw UsageError("head_input_patch: donor has " + std::to_string(tokens_donor.size()) +
                     " tokens, clean prompt has " + std::to_string(tokens_clean.size()));
  }
  const auto donor = forward(model, tokens_donor, nullptr, {.compute_logits = false});
  const auto plan = head_input_plan(target, donor.resid_at(ResidCheckpoint::pre(target.layer)));
  return forward(model, tokens_clean, &plan, options);
}

namespace {

const char* kind_name(HookPoint::Kind k) {
  switch (k) {
    case HookPoint::Kind::ValueInput: return "value_input";
    case HookPoint::Kind::QueryInput: return "query_input";
    case HookPoint::Kind::KeyInput: return "key_input";
    case HookPoint::Kind::ResidAt: return "resid_at";
    case HookPoint::Kind::ComponentOut: return "component_out";
  }
  return "?";
}

HookPoint point_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "value_input" || kind == "query_input" || kind == "key_input") {
    const int layer = j.at("layer").get<int>();
    auto heads = j.at("heads").get<std::vector<int>>();
    if (kind == "value_input") return HookPoint::value_input(layer, std::move(heads));
    if (kind == "query_input") return HookPoint::query_input(layer, std::move(heads));
    return HookPoint::key_input(layer, std::move(heads));
  }
  if (kind == "resid_at") {
    return HookPoint::resid_at(parse_checkpoint(j.at("checkpoint").get<std::string>()));
  }
  if (kind == "component_out") {
    return HookPoint::component_out(parse_component(j.at("component").get<std::string>()));
  }
  throw UsageError("unknown hook point kind '" + kind + "'");
}

EditAction action_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "subtract_component") {
    const auto source = j.value("source", std::string("same_run"));
    if (source != "same_run") throw UsageError("unsupported subtract source '" + source + "'");
    return SubtractComponent{parse_component(j.at("component").get<std::string>())};
  }
  if (kind == "replace_with") {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    return ReplaceWith{Matrix(rows, cols, j.at("data").get<std::vector<float>>())};
  }
  if (kind == "zero_out") return ZeroOut{};
  throw UsageError("unknown edit action '" + kind + "'");
}

}  // namespace

json plan_to_json(const InterventionPlan& plan) {
  json edits = json::array();
  for (const Edit& e : plan.edits) {
    json point = {{"kind", kind_name(e.point.kind)}};
    if (e.point.is_head_input()) {
      point["layer"] = e.point.layer;
      point["heads"] = e.point.heads;
    } else if (e.point.kind == HookPoint::Kind::ResidAt) {
      point["checkpoint"] = to_string(e.point.checkpoint);
    } else {
      point["component"] = to_string(e.point.component);
    }
    json action;
    if (const auto* sub = std::get_if<SubtractComponent>(&e.action)) {
      action = {{"kind", "subtract_component"},
                {"component", to_string(sub->component)},
                {"source", "same_run"}};
    } else if (const auto* rep = std::get_if<ReplaceWith>(&e.action)) {
      action = {{"kind", "replace_with"},
                {"rows", rep->tensor.rows()},
                {"cols", rep->tensor.cols()},
                {"data", rep->tensor.storage()}};
    } else {
      action = {{"kind", "zero_out"}};
    }
    json scope = e.positions ? json(*e.positions) : json("all");
    edits.push_back({{"point", point}, {"action", action}, {"scope", scope}});
  }
  return {{"edits", edits}};
}

InterventionPlan plan_from_json(const json& doc) {
  InterventionPlan plan;
  try {
    for (const auto& e : doc.at("edits")) {
      Edit edit{point_from_json(e.at("point")), action_from_json(e.at("action")), std::nullopt};
      const auto& scope = e.contains("scope") ? e.at("scope") : json("all");
      if (scope.is_array()) {
        edit.positions = scope.get<std::vector<std::size_t>>();
      } else if (scope != "all") {
        throw UsageError("edit scope must be \"all\" or a list of positions");
      }
      plan.edits.push_back(std::move(edit));
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed intervention plan: ") + e.what());
  }
  return plan;
}

}  // namespace erasure
