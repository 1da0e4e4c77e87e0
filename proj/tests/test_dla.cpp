#include <gtest/gtest.h>

#include "erasure/analysis.hpp"
#include "erasure/dla.hpp"
#include "erasure/error.hpp"
#include "erasure/interventions.hpp"
#include "test_support.hpp"

namespace erasure {
namespace {

TEST(Dla, ComponentsPlusConstantSumToLogits) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto m = testing::random_model(testing::small_config(3), seed);
    std::mt19937_64 rng(seed);
    const auto toks = testing::random_tokens(10, m.config.d_vocab, rng);
    const auto cache = forward(m, toks);
    const auto constant = dla_constant(m);
    for (std::size_t pos = 0; pos < toks.size(); ++pos) {
      std::vector<double> total = constant;
      for (const auto& c : all_components(m.config)) {
        const auto d = dla(m, cache, c, pos);
        for (std::size_t v = 0; v < total.size(); ++v) total[v] += d[v];
      }
      for (int v = 0; v < m.config.d_vocab; ++v) EXPECT_NEAR(total[v], cache.logits(pos, v), 1e-3);

      const auto spec = top2(cache, pos);
      double diff = constant[spec.token_a] - constant[spec.token_b];
      for (const auto& c : all_components(m.config)) diff += logit_diff(m, cache, c, spec);
      EXPECT_NEAR(diff, model_logit_diff(cache, spec), 1e-3);
    }
  }
}

TEST(Dla, ShiftInvariantAndAntisymmetric) {
  const auto m = testing::random_model(testing::small_config(), 4);
  const std::vector<TokenId> toks{5, 6, 7, 8};
  const auto cache = forward(m, toks);
  const auto c = ComponentId::attn_head(1, 2);
  const LogitDiffSpec spec{3, 9, 2};
  const auto row = cache.output(c).row(2);
  std::vector<float> shifted(row.begin(), row.end());
  for (float& v : shifted) v += 2.5f;
  EXPECT_NEAR(logit_diff(m, cache, shifted, spec), logit_diff(m, cache, c, spec), 1e-5);
  EXPECT_DOUBLE_EQ(logit_diff(m, cache, c, LogitDiffSpec{9, 3, 2}), -logit_diff(m, cache, c, spec));
  EXPECT_EQ(logit_diff(m, cache, c, LogitDiffSpec{4, 4, 2}), 0.0);
  EXPECT_THROW(logit_diff(m, cache, c, LogitDiffSpec{0, 1, 4}), UsageError);
  EXPECT_THROW(logit_diff(m, cache, c, LogitDiffSpec{0, 50, 0}), UsageError);
}

TEST(Top2, OrderAndTies) {
  ActivationCache cache;
  cache.tokens = {0, 0};
  cache.logits = Matrix(2, 5, {1, 7, 3, 7, 2,
                               4, 1, 9, 0, 8});
  auto s = top2(cache, 0);
  EXPECT_EQ(s.token_a, 1);
  EXPECT_EQ(s.token_b, 3);
  s = top2(cache, 1);
  EXPECT_EQ(s.token_a, 2);
  EXPECT_EQ(s.token_b, 4);
  EXPECT_EQ(s.position, 1u);
  EXPECT_DOUBLE_EQ(model_logit_diff(cache, s), 1.0);
}

TEST(ErasureDla, ConstructedModelCancelsExactly) {
  const auto ce = testing::constructed_erasure_model();
  std::vector<TokenId> toks{3, 1, 4, 1, 5, 9, 2, 6};
  const auto clean = forward(ce.model, toks);
  // The writer emits u everywhere and the eraser emits -u.
  for (std::size_t t = 0; t < toks.size(); ++t) {
    for (int d = 0; d < ce.model.config.d_model; ++d) {
      EXPECT_NEAR(clean.output(ce.writer)(t, d), ce.u[d], 1e-6);
      EXPECT_NEAR(clean.output(ce.eraser)(t, d), -ce.u[d], 1e-5);
    }
    EXPECT_NEAR(projection_ratio(clean.output(ce.eraser).row(t), clean.output(ce.writer).row(t)),
                -1.0, 1e-5);
  }
  const std::vector<ComponentId> erasers{ce.eraser};
  const auto patched = zero_ablate_vcomposition(ce.model, toks, ce.writer, erasers);
  for (float v : patched.output(ce.eraser).values()) EXPECT_NEAR(v, 0.0, 1e-6);

  for (std::size_t pos = 0; pos < toks.size(); ++pos) {
    const auto spec = top2(clean, pos);
    const auto r = erasure_isolated_dla(ce.model, toks, ce.writer, erasers, spec);
    EXPECT_NEAR(r.writer_dla, logit_diff(ce.model, clean, ce.writer, spec), 1e-9);
    EXPECT_NEAR(r.erasure_dla, -r.writer_dla, 1e-4);
    EXPECT_GT(std::abs(r.writer_dla), 1e-3);
  }
}

TEST(ErasureDla, EmptyEraserSet) {
  const auto m = testing::random_model(testing::small_config(3), 6);
  const std::vector<TokenId> toks{1, 2, 3, 4, 5};
  const auto writer = ComponentId::attn_head(0, 1);
  const auto clean = forward(m, toks);
  const auto spec = top2(clean, 4);
  const auto r = erasure_isolated_dla(m, toks, writer, {}, spec);
  EXPECT_EQ(r.erasure_dla, 0.0);
  EXPECT_DOUBLE_EQ(r.writer_dla, logit_diff(m, clean, writer, spec));
}

TEST(ErasureDla, LinearInErasers) {
  const auto m = testing::random_model(testing::small_config(3), 7);
  const std::vector<TokenId> toks{9, 8, 7, 6, 5, 4};
  const auto writer = ComponentId::attn_head(0, 0);
  const std::vector<ComponentId> erasers{ComponentId::attn_head(1, 1), ComponentId::attn_head(2, 0)};
  const auto clean = forward(m, toks);
  const auto patched = zero_ablate_vcomposition(m, toks, writer, erasers);
  const auto spec = top2(clean, 5);
  double want = 0;
  for (const auto& e : erasers) {
    const auto diff = subtract(clean.output(e), patched.output(e));
    want += logit_diff(m, clean, diff.row(5), spec);
  }
  const auto r = erasure_isolated_dla(m, clean, patched, writer, erasers, spec);
  EXPECT_NEAR(r.erasure_dla, want, 1e-9);
}

}  // namespace
}  // namespace erasure
