#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "erasure/analysis.hpp"
#include "erasure/error.hpp"
#include "test_support.hpp"

namespace erasure {
namespace {

std::vector<float> random_vec(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::vector<float> v(n);
  testing::fill_normal(v, rng, sd);
  return v;
}

TEST(ProjectionRatio, Identities) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_vec(rng, 16);
    const auto b = random_vec(rng, 16);
    const auto c = random_vec(rng, 16);
    std::vector<float> neg(b.size()), sum(a.size()), half(b.size());
    for (std::size_t k = 0; k < b.size(); ++k) {
      neg[k] = -b[k];
      sum[k] = a[k] + c[k];
      half[k] = 2.0f * b[k];
    }
    EXPECT_NEAR(projection_ratio(b, b), 1.0, 1e-9);
    EXPECT_NEAR(projection_ratio(neg, b), -1.0, 1e-9);
    EXPECT_NEAR(projection_ratio(sum, b), projection_ratio(a, b) + projection_ratio(c, b), 1e-5);
    EXPECT_NEAR(projection_ratio(a, half), projection_ratio(a, b) / 2.0, 1e-6);
  }
}

TEST(ProjectionRatio, OrthogonalAndHandComputed) {
  EXPECT_EQ(projection_ratio(std::vector<float>{0, 3}, std::vector<float>{2, 0}), 0.0);
  // (1*2 + 2*0) / 4
  EXPECT_DOUBLE_EQ(projection_ratio(std::vector<float>{1, 2}, std::vector<float>{2, 0}), 0.5);
}

TEST(ProjectionRatio, DegenerateReference) {
  const std::vector<float> a{1, 1}, zero{0, 0}, tiny{1e-7f, 0};
  EXPECT_THROW(projection_ratio(a, zero), DegenerateReference);
  EXPECT_FALSE(try_projection_ratio(a, zero));
  EXPECT_FALSE(try_projection_ratio(a, tiny));
  EXPECT_TRUE(try_projection_ratio(a, tiny, 1e-20));
  EXPECT_THROW(projection_ratio(a, std::vector<float>{1, 2, 3}), UsageError);
}

TEST(Decomposition, TraceIsSumOfComponentRatios) {
  const auto m = testing::random_model(testing::small_config(3), 3);
  std::mt19937_64 rng(4);
  const auto toks = testing::random_tokens(16, m.config.d_vocab, rng);
  const auto cache = forward(m, toks);
  const auto target = ComponentId::attn_head(0, 1);
  const auto trace = resid_trace(cache, target);
  const auto all = all_components(m.config);
  for (const auto& k : trace_checkpoints(m.config)) {
    std::vector<ComponentId> before;
    for (const auto& c : all)
      if (written_before(c, k)) before.push_back(c);
    const auto per = component_projection_matrix(cache, target, before);
    for (std::size_t t = 0; t < toks.size(); ++t) {
      double s = 0;
      for (const auto& [c, r] : per) s += *r[t];
      EXPECT_NEAR(*trace.at(k)[t], s, 1e-3) << to_string(k) << " t=" << t;
    }
    const auto summed = summed_projection(cache, target, before);
    for (std::size_t t = 0; t < toks.size(); ++t) EXPECT_NEAR(*summed[t], *trace.at(k)[t], 1e-3);
  }
  // The target itself reads 1.
  const auto self = component_projection_matrix(cache, target, std::vector{target});
  for (const auto& r : self.at(target)) EXPECT_NEAR(*r, 1.0, 1e-9);
}

TEST(Quantile, MatchesSortedOracle) {
  EXPECT_DOUBLE_EQ(quantile({3, 1, 2}, 0.5), 2.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5}, 0.25), 2.0);
  EXPECT_DOUBLE_EQ(quantile({10, 0}, 0.75), 7.5);
  EXPECT_DOUBLE_EQ(quantile({5}, 0.3), 5.0);
  EXPECT_THROW(quantile({}, 0.5), UsageError);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> xs(1000);
  for (auto& x : xs) x = u(rng);
  auto sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  const double pos = 999 * 0.25;
  const auto lo = static_cast<std::size_t>(pos);
  const double want = sorted[lo] + (pos - lo) * (sorted[lo + 1] - sorted[lo]);
  const auto s = aggregate(xs);
  EXPECT_DOUBLE_EQ(s.q25, want);
  EXPECT_EQ(s.n, 1000u);
  EXPECT_NEAR(s.median, 0.5, 0.05);
  EXPECT_NEAR(s.q25, 0.25, 0.05);
  EXPECT_NEAR(s.q75, 0.75, 0.05);
  EXPECT_LE(s.q25, s.median);
  EXPECT_LE(s.median, s.q75);
}

TEST(PoolRatios, DropsPositionZeroAndDegenerate) {
  const PositionRatios r{0.9, std::nullopt, -0.2, 0.4};
  std::vector<double> out;
  std::size_t excluded = 0;
  pool_ratios(r, false, out, &excluded);
  EXPECT_EQ(out, (std::vector<double>{-0.2, 0.4}));
  EXPECT_EQ(excluded, 1u);
  out.clear();
  pool_ratios(r, true, out);
  EXPECT_EQ(out, (std::vector<double>{0.9, -0.2, 0.4}));
}

TEST(IdentifyErasers, ThresholdAndOrder) {
  std::map<ComponentId, QuantileSummary> s;
  s[ComponentId::attn_head(1, 0)] = {-0.3, -0.2, -0.06, -0.2, 10};
  s[ComponentId::attn_head(1, 1)] = {-0.3, -0.25, -0.04, -0.2, 10};
  s[ComponentId::mlp(1)] = {-0.9, -0.5, -0.1, -0.5, 10};
  s[ComponentId::attn_head(2, 0)] = {0.1, 0.2, 0.3, 0.2, 10};
  const auto e = identify_erasers(s);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0], ComponentId::mlp(1));
  EXPECT_EQ(e[1], ComponentId::attn_head(1, 0));
  EXPECT_EQ(identify_erasers(s, 0.2).size(), 0u);
  EXPECT_EQ(identify_erasers(s, 0.0).size(), 3u);
}

TEST(IdentifyErasers, InvariantToJointRescaling) {
  // PR(k a, k b) = PR(a, b): rescaling every output leaves the scan unchanged.
  auto m = testing::random_model(testing::small_config(3), 31);
  std::mt19937_64 rng(32);
  const auto toks = testing::random_tokens(20, m.config.d_vocab, rng);
  const auto target = ComponentId::attn_head(0, 0);
  std::vector<ComponentId> cands;
  for (const auto& c : all_components(m.config))
    if (c.kind == ComponentId::Kind::Head && c.layer > 0) cands.push_back(c);
  const auto cache = forward(m, toks);
  auto scaled = cache;
  for (auto& [c, out] : scaled.component_out)
    for (float& v : out.values()) v *= 4.0f;
  const auto a = component_projection_matrix(cache, target, cands);
  const auto b = component_projection_matrix(scaled, target, cands);
  std::map<ComponentId, QuantileSummary> sa, sb;
  for (const auto& c : cands) {
    std::vector<double> xa, xb;
    pool_ratios(a.at(c), false, xa);
    pool_ratios(b.at(c), false, xb);
    sa[c] = aggregate(xa);
    sb[c] = aggregate(xb);
    EXPECT_NEAR(sa[c].median, sb[c].median, 1e-9);
  }
  EXPECT_EQ(identify_erasers(sa, 0.0), identify_erasers(sb, 0.0));
}

TEST(Fit, PlantedSlopeRecovered) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> xs(500), ys(500);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = n(rng);
    ys[i] = -0.6 * xs[i] + 0.1 + 0.3 * n(rng);
  }
  const auto f = fit_correlation(xs, ys);
  EXPECT_NEAR(f.slope, -0.6, 0.05);
  EXPECT_NEAR(f.intercept, 0.1, 0.05);
  EXPECT_LT(f.pearson_r, -0.8);
  EXPECT_EQ(f.n, 500u);
}

TEST(Fit, IndependentSamplesUncorrelated) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> xs(500), ys(500);
  for (auto& x : xs) x = n(rng);
  for (auto& y : ys) y = n(rng);
  EXPECT_LT(std::abs(fit_correlation(xs, ys).pearson_r), 0.2);
}

TEST(Fit, AffineInvarianceAndExactLine) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> xs(200), ys(200), xs2(200), ys2(200);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = n(rng);
    ys[i] = xs[i] + n(rng);
    xs2[i] = 3.0 * xs[i] - 7.0;
    ys2[i] = -0.5 * ys[i] + 2.0;
  }
  EXPECT_NEAR(fit_correlation(xs2, ys2).pearson_r, -fit_correlation(xs, ys).pearson_r, 1e-9);

  const std::vector<double> lx{0, 1, 2, 3}, ly{1, 3, 5, 7};
  const auto f = fit_correlation(lx, ly);
  EXPECT_NEAR(f.pearson_r, 1.0, 1e-12);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
}

TEST(Fit, DegenerateInputs) {
  EXPECT_THROW(fit_correlation(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), NumericError);
  EXPECT_THROW(fit_correlation(std::vector<double>{1, 2}, std::vector<double>{1}), UsageError);
}

}  // namespace
}  // namespace erasure
