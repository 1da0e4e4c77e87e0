#include <gtest/gtest.h>

#include "erasure/error.hpp"
#include "erasure/ids.hpp"
#include "erasure/model.hpp"
#include "erasure/plan.hpp"
#include "test_support.hpp"

namespace erasure {
namespace {

TEST(ComponentId, RoundTripsThroughText) {
  const auto cfg = testing::small_config(3);
  for (const auto& c : all_components(cfg)) EXPECT_EQ(parse_component(to_string(c)), c);
  EXPECT_EQ(parse_component("l0h2"), ComponentId::attn_head(0, 2));
  EXPECT_EQ(parse_component("mlp3"), ComponentId::mlp(3));
  EXPECT_EQ(to_string(ComponentId::attn_bias(1)), "BIAS1");
}

TEST(ComponentId, RejectsMalformedAndOutOfRange) {
  for (const char* bad : {"", "L", "L0", "H2", "L0H", "LxH1", "MLP", "L0H2x", "L-1H0"})
    EXPECT_THROW(parse_component(bad), UsageError) << bad;
  const auto cfg = testing::small_config(2, 32, 4);
  EXPECT_THROW(validate(parse_component("L9H9"), cfg), UsageError);
  EXPECT_THROW(validate(ComponentId::attn_head(0, 4), cfg), UsageError);
  EXPECT_THROW(validate(ComponentId::mlp(2), cfg), UsageError);
  EXPECT_NO_THROW(validate(ComponentId::mlp(1), cfg));
}

TEST(ComponentId, WriteOrderEnumeration) {
  const auto cfg = testing::small_config(2, 32, 4);
  const auto all = all_components(cfg);
  ASSERT_EQ(all.size(), 2u + 2u * (4u + 2u));
  EXPECT_EQ(all[0], ComponentId::embed());
  EXPECT_EQ(all[1], ComponentId::pos_embed());
  EXPECT_EQ(all[2], ComponentId::attn_head(0, 0));
  EXPECT_EQ(all[6], ComponentId::attn_bias(0));
  EXPECT_EQ(all[7], ComponentId::mlp(0));
}

TEST(ResidCheckpoint, OrderAndText) {
  EXPECT_LT(ResidCheckpoint::pre(0), ResidCheckpoint::mid(0));
  EXPECT_LT(ResidCheckpoint::mid(0), ResidCheckpoint::post(0));
  EXPECT_LT(ResidCheckpoint::post(0), ResidCheckpoint::pre(1));
  EXPECT_EQ(to_string(ResidCheckpoint::mid(2)), "resid_mid_2");
  EXPECT_EQ(parse_checkpoint("resid_post_1"), ResidCheckpoint::post(1));
  EXPECT_THROW(parse_checkpoint("resid_side_1"), UsageError);

  const auto trace = trace_checkpoints(testing::small_config(2));
  ASSERT_EQ(trace.size(), 5u);
  EXPECT_EQ(trace.front(), ResidCheckpoint::pre(0));
  EXPECT_EQ(trace.back(), ResidCheckpoint::post(1));
}

TEST(ResidCheckpoint, WrittenBefore) {
  const auto h = ComponentId::attn_head(1, 0);
  EXPECT_FALSE(written_before(h, ResidCheckpoint::pre(1)));
  EXPECT_TRUE(written_before(h, ResidCheckpoint::mid(1)));
  EXPECT_FALSE(written_before(ComponentId::mlp(1), ResidCheckpoint::mid(1)));
  EXPECT_TRUE(written_before(ComponentId::mlp(1), ResidCheckpoint::post(1)));
  EXPECT_TRUE(written_before(ComponentId::embed(), ResidCheckpoint::pre(0)));
}

TEST(Plan, ValidationAndOrdering) {
  const auto cfg = testing::small_config(2, 32, 4);
  InterventionPlan plan;
  EXPECT_FALSE(plan.earliest_order());
  plan.edits.push_back({HookPoint::value_input(1, {0, 2}), SubtractComponent{ComponentId::attn_head(0, 1)}, std::nullopt});
  plan.edits.push_back({HookPoint::resid_at(ResidCheckpoint::pre(0)), ZeroOut{}, std::vector<std::size_t>{3}});
  EXPECT_NO_THROW(validate(plan, cfg));
  EXPECT_EQ(plan.earliest_order(), 0);

  InterventionPlan empty_heads;
  empty_heads.edits.push_back({HookPoint::value_input(1, {}), ZeroOut{}, std::nullopt});
  EXPECT_THROW(validate(empty_heads, cfg), UsageError);

  InterventionPlan bad_head;
  bad_head.edits.push_back({HookPoint::query_input(0, {7}), ZeroOut{}, std::nullopt});
  EXPECT_THROW(validate(bad_head, cfg), UsageError);
}

}  // namespace
}  // namespace erasure
