#include <gtest/gtest.h>

#include "erasure/error.hpp"
#include "erasure/interventions.hpp"
#include "test_support.hpp"

namespace erasure {
namespace {

struct Fixture {
  Model model = testing::random_model(testing::small_config(3), 41);
  std::vector<TokenId> tokens;
  Fixture() {
    std::mt19937_64 rng(42);
    tokens = testing::random_tokens(12, model.config.d_vocab, rng);
  }
};

TEST(Plan, EmptyPlanIsIdentity) {
  Fixture f;
  const auto clean = forward(f.model, f.tokens);
  const auto same = apply_plan(f.model, f.tokens, InterventionPlan{});
  EXPECT_EQ(same.logits, clean.logits);
  EXPECT_EQ(same.resid, clean.resid);
}

TEST(Plan, SubtractThenReplaceSameValueIsNoOp) {
  Fixture f;
  const auto clean = forward(f.model, f.tokens);
  InterventionPlan plan;
  plan.edits.push_back({HookPoint::resid_at(ResidCheckpoint::pre(1)),
                        ReplaceWith{clean.resid_at(ResidCheckpoint::pre(1))}, std::nullopt});
  const auto out = apply_plan(f.model, f.tokens, plan);
  EXPECT_EQ(out.logits, clean.logits);
}

TEST(VComposition, ValueInputIsCleanMinusWriterExactly) {
  Fixture f;
  const auto writer = ComponentId::attn_head(0, 2);
  const std::vector<ComponentId> erasers{ComponentId::attn_head(1, 0), ComponentId::attn_head(2, 3)};
  const auto clean = forward(f.model, f.tokens);
  const auto patched = zero_ablate_vcomposition(f.model, f.tokens, writer, erasers);

  // Everything before layer 1 is untouched, as is the writer's own output.
  EXPECT_EQ(patched.resid_at(ResidCheckpoint::pre(0)), clean.resid_at(ResidCheckpoint::pre(0)));
  EXPECT_EQ(patched.output(writer), clean.output(writer));

  const auto& in = patched.edited_head_inputs.at({1, 0, HeadInput::Value});
  const auto want = subtract(clean.resid_at(ResidCheckpoint::pre(1)), clean.output(writer));
  EXPECT_EQ(in, want);
  // Queries and keys were not edited.
  EXPECT_FALSE(patched.edited_head_inputs.contains({1, 0, HeadInput::Query}));
  EXPECT_FALSE(patched.edited_head_inputs.contains({1, 0, HeadInput::Key}));

  // The later eraser sees its own run's residual minus the writer.
  const auto& in2 = patched.edited_head_inputs.at({2, 3, HeadInput::Value});
  EXPECT_EQ(in2, subtract(patched.resid_at(ResidCheckpoint::pre(2)), patched.output(writer)));

  // Attention patterns of the patched heads are unchanged (Q and K intact).
  EXPECT_EQ(patched.attn_patterns[1][0], clean.attn_patterns[1][0]);
  EXPECT_NE(patched.output(erasers[0]), clean.output(erasers[0]));
  // A sibling head in the same layer reads the clean stream.
  EXPECT_EQ(patched.output(ComponentId::attn_head(1, 1)), clean.output(ComponentId::attn_head(1, 1)));
}

TEST(VComposition, RejectsErasersNotAfterWriter) {
  Fixture f;
  const auto writer = ComponentId::attn_head(1, 0);
  EXPECT_THROW(vcomposition_ablation_plan(f.model.config, writer,
                                          std::vector{ComponentId::attn_head(1, 1)}),
               UsageError);
  EXPECT_THROW(vcomposition_ablation_plan(f.model.config, writer, std::vector{ComponentId::mlp(2)}),
               UsageError);
  EXPECT_THROW(vcomposition_ablation_plan(f.model.config, ComponentId::attn_head(0, 0),
                                          std::vector{ComponentId::attn_head(5, 0)}),
               UsageError);
}

TEST(VComposition, EmptyEraserSetIsClean) {
  Fixture f;
  const auto clean = forward(f.model, f.tokens);
  const auto p = zero_ablate_vcomposition(f.model, f.tokens, ComponentId::attn_head(0, 0), {});
  EXPECT_EQ(p.logits, clean.logits);
}

TEST(ComponentOut, ZeroOutMlpMatchesRecomputation) {
  Fixture f;
  const auto clean = forward(f.model, f.tokens);
  InterventionPlan plan;
  plan.edits.push_back({HookPoint::component_out(ComponentId::mlp(2)), ZeroOut{}, std::nullopt});
  const auto out = apply_plan(f.model, f.tokens, plan);
  for (float v : out.output(ComponentId::mlp(2)).values()) EXPECT_EQ(v, 0.0f);
  // Last layer: final residual is the clean mid plus nothing.
  EXPECT_EQ(out.resid_at(ResidCheckpoint::post(2)), clean.resid_at(ResidCheckpoint::mid(2)));
  // Oracle logits: LN_final(resid_mid_2) W_U + b_U.
  const auto& w = f.model.weights;
  for (std::size_t t = 0; t < f.tokens.size(); ++t) {
    const auto x = layer_norm(clean.resid_at(ResidCheckpoint::mid(2)).row(t), w.ln_final.gamma,
                              w.ln_final.beta, f.model.config.ln_eps);
    for (int v = 0; v < f.model.config.d_vocab; ++v) {
      double s = w.b_U[v];
      for (int d = 0; d < f.model.config.d_model; ++d) s += double(x[d]) * w.W_U(d, v);
      EXPECT_NEAR(out.logits(t, v), s, 1e-4);
    }
  }
}

TEST(ComponentOut, ScopedEditTouchesOnlyListedPositions) {
  Fixture f;
  const auto clean = forward(f.model, f.tokens);
  InterventionPlan plan;
  plan.edits.push_back({HookPoint::component_out(ComponentId::attn_head(0, 1)), ZeroOut{},
                        std::vector<std::size_t>{5}});
  const auto out = apply_plan(f.model, f.tokens, plan);
  const auto& h = out.output(ComponentId::attn_head(0, 1));
  for (std::size_t t = 0; t < f.tokens.size(); ++t) {
    for (std::size_t d = 0; d < h.cols(); ++d) {
      if (t == 5)
        EXPECT_EQ(h(t, d), 0.0f);
      else
        EXPECT_EQ(h(t, d), clean.output(ComponentId::attn_head(0, 1))(t, d));
    }
  }
  for (std::size_t t = 0; t < 5; ++t)
    for (int v = 0; v < f.model.config.d_vocab; ++v) EXPECT_EQ(out.logits(t, v), clean.logits(t, v));
}

TEST(ResidAt, ReplaceAtFirstCheckpoint) {
  Fixture f;
  std::vector<TokenId> other = f.tokens;
  other[3] = (other[3] + 1) % f.model.config.d_vocab;
  const auto donor = forward(f.model, other);
  InterventionPlan plan;
  plan.edits.push_back({HookPoint::resid_at(ResidCheckpoint::pre(0)),
                        ReplaceWith{donor.resid_at(ResidCheckpoint::pre(0))}, std::nullopt});
  const auto out = apply_plan(f.model, f.tokens, plan);
  EXPECT_EQ(out.logits, donor.logits);
}

TEST(HeadInputPatch, DonorEqualCleanIsClean) {
  Fixture f;
  const auto clean = forward(f.model, f.tokens);
  const auto p = head_input_patch(f.model, f.tokens, f.tokens, ComponentId::attn_head(1, 2));
  EXPECT_EQ(p.logits, clean.logits);
}

TEST(HeadInputPatch, OnlyTargetChanges) {
  Fixture f;
  std::mt19937_64 rng(43);
  const auto donor_toks = testing::random_tokens(f.tokens.size(), f.model.config.d_vocab, rng);
  const auto target = ComponentId::attn_head(1, 2);
  const auto clean = forward(f.model, f.tokens);
  const auto donor = forward(f.model, donor_toks);
  const auto p = head_input_patch(f.model, f.tokens, donor_toks, target);
  // The patched head reproduces the donor's head output exactly.
  EXPECT_EQ(p.output(target), donor.output(target));
  EXPECT_EQ(p.output(ComponentId::attn_head(1, 1)), clean.output(ComponentId::attn_head(1, 1)));
  EXPECT_EQ(p.resid_at(ResidCheckpoint::pre(1)), clean.resid_at(ResidCheckpoint::pre(1)));
  EXPECT_THROW(head_input_patch(f.model, f.tokens, std::vector<TokenId>{1, 2}, target), UsageError);
  EXPECT_THROW(head_input_patch(f.model, f.tokens, f.tokens, ComponentId::mlp(1)), UsageError);
}

TEST(PlanValidation, BadEdits) {
  Fixture f;
  InterventionPlan wrong_shape;
  wrong_shape.edits.push_back({HookPoint::resid_at(ResidCheckpoint::mid(0)), ReplaceWith{Matrix(2, 2)}, std::nullopt});
  EXPECT_THROW(apply_plan(f.model, f.tokens, wrong_shape), UsageError);

  InterventionPlan bad_pos;
  bad_pos.edits.push_back({HookPoint::resid_at(ResidCheckpoint::mid(0)), ZeroOut{}, std::vector<std::size_t>{99}});
  EXPECT_THROW(apply_plan(f.model, f.tokens, bad_pos), UsageError);

  // Subtracting a component that has not been computed yet at that point.
  InterventionPlan future;
  future.edits.push_back({HookPoint::value_input(1, {0}), SubtractComponent{ComponentId::mlp(2)}, std::nullopt});
  EXPECT_THROW(apply_plan(f.model, f.tokens, future), UsageError);
}

TEST(PlanJson, RoundTrip) {
  InterventionPlan plan;
  plan.edits.push_back({HookPoint::value_input(2, {1, 3}), SubtractComponent{ComponentId::attn_head(0, 2)}, std::nullopt});
  plan.edits.push_back({HookPoint::query_input(1, {0}), ReplaceWith{Matrix(2, 3, {1, 2, 3, 4, 5, 6.5f})}, std::vector<std::size_t>{0, 1}});
  plan.edits.push_back({HookPoint::key_input(1, {0}), ZeroOut{}, std::nullopt});
  plan.edits.push_back({HookPoint::resid_at(ResidCheckpoint::mid(1)), ZeroOut{}, std::nullopt});
  plan.edits.push_back({HookPoint::component_out(ComponentId::mlp(0)), ZeroOut{}, std::vector<std::size_t>{4}});
  const auto j = plan_to_json(plan);
  EXPECT_EQ(plan_from_json(j), plan);
  EXPECT_EQ(plan_from_json(nlohmann::json::parse(j.dump())), plan);
  EXPECT_THROW(plan_from_json(nlohmann::json::parse(R"({"edits":[{"point":{"kind":"nowhere"}}]})")), UsageError);
  EXPECT_THROW(plan_from_json(nlohmann::json::parse(R"({"nothing":1})")), UsageError);
}

}  // namespace
}  // namespace erasure
