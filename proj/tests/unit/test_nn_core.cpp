#include <gtest/gtest.h>

#include <cmath>

#include "dbcsem/errors.hpp"
#include "dbcsem/nn_core.hpp"
#include "../support/oracles.hpp"

using namespace dbcsem;
using namespace dbcsem::nn;

namespace {

// Fixed random projection turning a module output into a scalar.
torch::Tensor probe_like(const torch::Tensor& out, std::uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::randn(out.sizes(), gen, torch::kDouble);
}

void zero_module(torch::nn::Module& m) {
  torch::NoGradGuard guard;
  for (auto& p : m.parameters()) p.zero_();
}

}  // namespace

TEST(Swish, Examples) {
  EXPECT_EQ(swish(0.0), 0.0);
  EXPECT_NEAR(swish(20.0), 20.0, 1e-6);
  EXPECT_NEAR(swish(-20.0), 0.0, 1e-6);
  EXPECT_NEAR(swish(-1.5), -1.5 / (1.0 + std::exp(1.5)), 1e-15);
  auto t = swish(torch::tensor({0.0, 1.0, -1.0}, torch::kDouble));
  EXPECT_NEAR(t[1].item<double>(), swish(1.0), 1e-15);
  EXPECT_NEAR(t[2].item<double>(), swish(-1.0), 1e-15);
}

TEST(Swish, GradientMatchesFiniteDifferences) {
  auto x = torch::linspace(-6, 6, 25, torch::kDouble).requires_grad_(true);
  const auto r = probe_like(x, 1);
  auto check = oracle::gradient_check([&] { return (swish(x) * r).sum(); }, {x});
  EXPECT_LE(check.relative, 1e-3);
}

TEST(SinusoidalEmbed, ZeroPosition) {
  const auto e = sinusoidal_embed(0.0, 8);
  for (std::size_t k = 0; k < e.size(); k += 2) {
    EXPECT_EQ(e[k], 0.0);
    EXPECT_EQ(e[k + 1], 1.0);
  }
}

TEST(SinusoidalEmbed, FrequenciesRangeAndDeterminism) {
  const auto e = sinusoidal_embed(13.0, 4);
  EXPECT_NEAR(e[0], std::sin(13.0), 1e-15);
  EXPECT_NEAR(e[1], std::cos(13.0), 1e-15);
  EXPECT_NEAR(e[2], std::sin(0.13), 1e-15);
  EXPECT_NEAR(e[3], std::cos(0.13), 1e-15);
  for (double snr : {-7.3, 0.5, 13.0, 19.0, 250.0}) {
    const auto v = sinusoidal_embed(snr, 64);
    EXPECT_EQ(v, sinusoidal_embed(snr, 64));
    const auto t = sinusoidal_embed(torch::tensor({snr}, torch::kDouble), 64);
    for (std::size_t k = 0; k < v.size(); ++k) {
      ASSERT_LE(std::abs(v[k]), 1.0);
      ASSERT_NEAR(t[0][static_cast<std::int64_t>(k)].item<double>(), v[k], 1e-12);
    }
  }
  EXPECT_THROW(sinusoidal_embed(1.0, 5), ConfigError);
  EXPECT_THROW(sinusoidal_embed(torch::ones({2}), 3), ConfigError);
}

TEST(CsiEncoder, ZeroWeightsGiveZero) {
  CsiEncoder enc(CsiEncoderOptions{8, 6, 4});
  zero_module(*enc);
  auto out = enc(torch::tensor({5.0, 13.0}));
  EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{2, 4}));
  EXPECT_EQ(out.abs().sum().item<double>(), 0.0);
}

TEST(CsiEncoder, DeterministicAndSnrDependent) {
  torch::manual_seed(2);
  CsiEncoder enc(CsiEncoderOptions{8, 8, 4});
  auto a = enc(torch::tensor({13.0})), b = enc(torch::tensor({13.0})), c = enc(torch::tensor({8.0}));
  EXPECT_TRUE(torch::equal(a, b));
  EXPECT_FALSE(torch::equal(a, c));
}

TEST(CsiEncoder, GradientMatchesFiniteDifferences) {
  torch::manual_seed(3);
  CsiEncoder enc(CsiEncoderOptions{4, 4, 4});
  enc->to(torch::kDouble);
  auto snr = torch::tensor({5.0, 11.0, 19.0}, torch::kDouble);
  const auto r = probe_like(enc(snr), 2);
  auto check = oracle::gradient_check([&] { return (enc(snr) * r).sum(); }, enc->parameters());
  EXPECT_LE(check.relative, 1e-4);
}

TEST(CsiInject, ZeroFcIsIdentity) {
  CsiInject inject(4, 5);
  zero_module(*inject);
  auto f = torch::randn({2, 5, 3, 7});
  auto v = torch::randn({2, 4});
  EXPECT_TRUE(torch::equal(inject(f, v), f));
}

TEST(CsiInject, ColumnIsReplicatedOverTokens) {
  torch::manual_seed(4);
  CsiInject inject(4, 5);
  inject->to(torch::kDouble);
  auto f = torch::randn({2, 5, 3, 7}, torch::kDouble);
  auto v = torch::randn({2, 4}, torch::kDouble);
  auto diff = inject(f, v) - f;
  auto col = inject->column(v);  // B x C
  EXPECT_EQ(col.sizes(), (std::vector<std::int64_t>{2, 5}));
  for (std::int64_t y = 0; y < 3; ++y) {
    for (std::int64_t x = 0; x < 7; ++x) {
      EXPECT_TRUE(torch::allclose(diff.select(3, x).select(2, y), col, 0, 1e-15));
    }
  }
}

TEST(CsiInject, AdditiveDifferenceIsFeatureIndependent) {
  torch::manual_seed(5);
  CsiInject inject(4, 2);
  inject->to(torch::kDouble);
  auto v = torch::randn({1, 4}, torch::kDouble), v2 = torch::randn({1, 4}, torch::kDouble);
  auto f = torch::randn({1, 2, 3, 4}, torch::kDouble), g = torch::randn({1, 2, 3, 4}, torch::kDouble);
  auto d1 = inject(f, v) - inject(f, v2);
  auto d2 = inject(g, v) - inject(g, v2);
  EXPECT_TRUE(torch::allclose(d1, d2, 0, 1e-12));
  EXPECT_TRUE(torch::allclose(d1.select(3, 0), d1.select(3, 3), 0, 1e-15));
}

TEST(CsiInject, SurvivesChannelLayerNorm) {
  torch::manual_seed(6);
  CsiInject inject(4, 8);
  torch::nn::LayerNorm norm(torch::nn::LayerNormOptions({8}));
  auto f = torch::randn({1, 8, 4, 4});
  auto a = channel_layer_norm(norm, inject(f, torch::randn({1, 4})));
  auto b = channel_layer_norm(norm, inject(f, torch::randn({1, 4})));
  EXPECT_GT((a - b).abs().max().item<double>(), 1e-3);
}

TEST(CsiInject, GradientWrtVMatchesFiniteDifferences) {
  torch::manual_seed(6);
  // a 2 x 3 map: two channels, three token positions
  CsiInject inject(5, 2);
  inject->to(torch::kDouble);
  auto f = torch::randn({2, 2, 1, 3}, torch::kDouble);
  auto v = torch::randn({2, 5}, torch::kDouble).requires_grad_(true);
  const auto r = probe_like(f, 3);
  auto check = oracle::gradient_check([&] { return (inject(f, v) * r).sum(); }, {v});
  EXPECT_LE(check.relative, 1e-4);
  auto params = inject->parameters();
  auto check_w = oracle::gradient_check([&] { return (inject(f, v) * r).sum(); }, params);
  EXPECT_LE(check_w.relative, 1e-4);
}

TEST(CsiInject, ShapeMismatchRaises) {
  CsiInject inject(4, 3);
  EXPECT_THROW(inject(torch::randn({1, 2, 4, 4}), torch::randn({1, 4})), ConfigError);
  EXPECT_THROW(inject(torch::randn({1, 3, 3, 4}), torch::randn({1, 5})), ConfigError);
}

TEST(TransformerBlock, ShapePreserved) {
  torch::manual_seed(7);
  for (bool shift : {false, true}) {
    BlockConfig cfg{16, 4, 4, 2.0, shift};
    CsiTransformerBlock block(cfg, 8, 12, 6);
    auto x = torch::randn({3, 16, 8, 12});
    auto y = block(x, torch::randn({3, 6}));
    EXPECT_EQ(y.sizes(), x.sizes());
    EXPECT_TRUE(torch::isfinite(y).all().item<bool>());
  }
  CsiTransformerBlock plain(BlockConfig{8, 2, 2, 2.0, true}, 4, 4, 0);
  EXPECT_FALSE(plain->csi_inject);
  EXPECT_EQ(plain(torch::randn({1, 8, 4, 4}), torch::Tensor()).sizes(), (std::vector<std::int64_t>{1, 8, 4, 4}));
}

TEST(TransformerBlock, ZeroedBranchesLeaveResidualPlusCsiMap) {
  torch::manual_seed(8);
  for (bool shift : {false, true}) {
    CsiTransformerBlock block(BlockConfig{8, 2, 2, 2.0, shift}, 4, 4, 4);
    block->to(torch::kDouble);
    {
      torch::NoGradGuard guard;
      block->attn->proj->weight.zero_();
      block->attn->proj->bias.zero_();
      block->fc2->weight.zero_();
      block->fc2->bias.zero_();
    }
    auto x = torch::randn({2, 8, 4, 4}, torch::kDouble);
    auto v = torch::randn({2, 4}, torch::kDouble);
    auto expected = block->csi_inject(x, v);
    EXPECT_TRUE(torch::allclose(block(x, v), expected, 0, 1e-15));
  }
}

TEST(TransformerBlock, GradientMatchesFiniteDifferences) {
  for (bool shift : {false, true}) {
    torch::manual_seed(shift ? 9 : 10);
    CsiTransformerBlock block(BlockConfig{8, 2, 2, 2.0, shift}, 4, 4, 3);
    block->to(torch::kDouble);
    {
      // move the LayerNorm affine terms off their identity init
      torch::NoGradGuard guard;
      for (auto& p : block->parameters()) p.add_(0.1 * torch::randn_like(p));
    }
    auto x = torch::randn({1, 8, 4, 4}, torch::kDouble).requires_grad_(true);
    auto v = torch::randn({1, 3}, torch::kDouble).requires_grad_(true);
    const auto r = probe_like(x, 4);
    auto tensors = block->parameters();
    tensors.push_back(x);
    tensors.push_back(v);
    auto check = oracle::gradient_check([&] { return (block(x, v) * r).sum(); }, tensors);
    EXPECT_LE(check.relative, 1e-3) << "shift " << shift;
  }
}

TEST(TransformerBlock, ConfigurationErrors) {
  EXPECT_THROW(CsiTransformerBlock(BlockConfig{8, 2, 4, 2.0, false}, 6, 6, 0), ConfigError);
  EXPECT_THROW(CsiTransformerBlock(BlockConfig{8, 3, 2, 2.0, false}, 4, 4, 0), ConfigError);
  CsiTransformerBlock block(BlockConfig{8, 2, 2, 2.0, false}, 4, 4, 0);
  EXPECT_THROW(block(torch::randn({1, 8, 4, 6}), torch::Tensor()), ConfigError);
}

TEST(Resizing, EmbedMergeReverseHead) {
  torch::manual_seed(11);
  PatchEmbed embed(3, 16, 2);
  auto tokens = embed(torch::rand({2, 3, 32, 32}));
  EXPECT_EQ(tokens.sizes(), (std::vector<std::int64_t>{2, 16, 16, 16}));
  EXPECT_THROW(embed(torch::rand({1, 3, 31, 32})), ConfigError);

  PatchMerge merge(16);
  auto merged = merge(tokens);
  EXPECT_EQ(merged.sizes(), (std::vector<std::int64_t>{2, 32, 8, 8}));
  EXPECT_THROW(merge(torch::rand({1, 16, 5, 4})), ConfigError);

  PatchReverse reverse(32, 16);
  EXPECT_EQ(reverse(merged).sizes(), tokens.sizes());

  ConvHead head(16, 5);
  EXPECT_EQ(head(tokens).sizes(), (std::vector<std::int64_t>{2, 5, 16, 16}));
  EXPECT_THROW(ConvHead(16, 0), ConfigError);
}

TEST(Resizing, GradientsMatchFiniteDifferences) {
  torch::manual_seed(12);
  PatchMerge merge(2);
  PatchReverse reverse(4, 2);
  merge->to(torch::kDouble);
  reverse->to(torch::kDouble);
  auto x = torch::randn({1, 2, 4, 4}, torch::kDouble).requires_grad_(true);
  const auto r = probe_like(x, 5);
  auto tensors = merge->parameters();
  for (auto& p : reverse->parameters()) tensors.push_back(p);
  tensors.push_back(x);
  auto check = oracle::gradient_check([&] { return (reverse(merge(x)) * r).sum(); }, tensors);
  EXPECT_LE(check.relative, 1e-3);
}

TEST(ParameterReport, CountsCsiSeparately) {
  struct Holder : torch::nn::Module {
    Holder() {
      register_module("csi_encoder", CsiEncoder(CsiEncoderOptions{4, 4, 4}));
      register_module("block", CsiTransformerBlock(BlockConfig{8, 2, 2, 2.0, false}, 4, 4, 4));
    }
  } holder;
  const auto r = count_parameters(holder);
  // encoder (4*4+4)*2 plus block injection 4*8+8
  EXPECT_EQ(r.csi, 40 + 40);
  std::int64_t total = 0;
  for (const auto& p : holder.parameters()) total += p.numel();
  EXPECT_EQ(r.total, total);
  EXPECT_NEAR(r.csi_share(), 80.0 / static_cast<double>(total), 1e-15);
}
