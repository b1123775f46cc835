#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "dbcsem/baselines.hpp"
#include "dbcsem/errors.hpp"
#include "dbcsem/objective.hpp"
#include "../support/oracles.hpp"

using namespace dbcsem;

namespace {

ChannelSymbols symbols(torch::Tensor iq) {
  ChannelSymbols s;
  s.iq = std::move(iq);
  return s;
}

RgbImage gradient_image(int h, int w, int phase) {
  RgbImage img{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w * 3))};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      auto* px = &img.pixels[static_cast<std::size_t>((r * w + c) * 3)];
      px[0] = static_cast<std::uint8_t>((r * 8 + phase * 17) % 256);
      px[1] = static_cast<std::uint8_t>((c * 8 + phase * 31) % 256);
      px[2] = static_cast<std::uint8_t>(((r + c) * 4 + phase * 5) % 256);
    }
  }
  return img;
}

}  // namespace

TEST(TdSchedule, Examples) {
  EXPECT_EQ(td_schedule(768, 0.5), (std::pair<std::int64_t, std::int64_t>{384, 384}));
  EXPECT_EQ(td_schedule(768, 0.25), (std::pair<std::int64_t, std::int64_t>{192, 576}));
  EXPECT_THROW(td_schedule(768, 0.0), ConfigError);
  EXPECT_THROW(td_schedule(768, 1.0), ConfigError);
  EXPECT_THROW(td_schedule(10, 0.01), ConfigError);
  EXPECT_THROW(td_schedule(1, 0.5), ConfigError);
}

TEST(TdSchedule, ConservesChannelUses) {
  for (std::int64_t n : {100, 768, 6144}) {
    for (int i = 1; i < 100; ++i) {
      const double beta = i / 100.0;
      const auto [n1, n2] = td_schedule(n, beta);
      ASSERT_EQ(n1 + n2, n);
      ASSERT_EQ(n1, std::llround(beta * static_cast<double>(n)));
    }
  }
}

TEST(PaSuperpose, EndpointsAreExact) {
  torch::manual_seed(1);
  const auto x1 = power_normalize(torch::randn({2, 64}, torch::kDouble));
  const auto x2 = power_normalize(torch::randn({2, 64}, torch::kDouble));
  EXPECT_TRUE(torch::equal(pa_superpose(x1, x2, 1.0).iq, x1.iq));
  EXPECT_TRUE(torch::equal(pa_superpose(x1, x2, 0.0).iq, x2.iq));
  EXPECT_THROW(pa_superpose(x1, x2, 1.5), ConfigError);
  EXPECT_THROW(pa_superpose(x1, symbols(torch::zeros({2, 62}, torch::kDouble)), 0.5), ConfigError);
}

TEST(PaSuperpose, IndependentUnitLayersKeepUnitPower) {
  torch::manual_seed(2);
  const std::int64_t reals = 200'000;
  const auto x1 = power_normalize(torch::randn({1, reals}, torch::kDouble));
  const auto x2 = power_normalize(torch::randn({1, reals}, torch::kDouble));
  for (double gamma : {0.2, 0.5, 0.8}) {
    const double p = pa_superpose(x1, x2, gamma).power().item<double>();
    EXPECT_NEAR(p, 1.0, 0.01) << gamma;
  }
}

TEST(SicRates, ClosedFormExample) {
  const auto r = sic_rates(0.2, 13.0, 8.0);
  EXPECT_NEAR(r.r1, 2.3192, 1e-3);
  EXPECT_NEAR(r.r2, 1.692, 1e-3);
}

TEST(SicRates, MatchNumericMutualInformation) {
  for (const auto& [zeta, a, b] : {std::tuple{0.2, 13.0, 8.0}, std::tuple{0.5, 19.0, 14.0}, std::tuple{0.1, 7.0, 2.0}}) {
    const auto r = sic_rates(zeta, a, b);
    const double s1 = snr_db_to_noise_power(a), s2 = snr_db_to_noise_power(b);
    // user 2 treats user 1's layer as noise; user 1 cancels user 2's layer first
    const double i2 = oracle::complex_gaussian_mi_bits(1.0 - zeta, zeta + s2);
    const double i1 = oracle::complex_gaussian_mi_bits(zeta, s1);
    EXPECT_NEAR(r.r1, i1, 1e-3) << zeta;
    EXPECT_NEAR(r.r2, i2, 1e-3) << zeta;
    EXPECT_NEAR(r.r1 + r.r2, i1 + i2, 1e-3);
  }
}

TEST(SicRates, MonotoneInPowerSplit) {
  double prev1 = 0, prev2 = 1e9;
  for (int i = 1; i < 100; ++i) {
    const auto r = sic_rates(i / 100.0, 13.0, 8.0);
    ASSERT_GT(r.r1, prev1);
    ASSERT_LT(r.r2, prev2);
    prev1 = r.r1;
    prev2 = r.r2;
  }
  EXPECT_THROW(sic_rates(0.2, 8.0, 13.0), ConfigError);
  EXPECT_THROW(sic_rates(0.2, 8.0, 8.0), ConfigError);
  EXPECT_THROW(sic_rates(0.0, 13.0, 8.0), ConfigError);
}

TEST(SicBitBudgets, Floor) {
  const SicRates r{2.3192, 1.692};
  const auto [b1, b2] = sic_bit_budgets(768, r);
  EXPECT_EQ(b1, static_cast<std::int64_t>(std::floor(768 * 2.3192)));
  EXPECT_EQ(b2, static_cast<std::int64_t>(std::floor(768 * 1.692)));
}

TEST(Ppm, RoundTrip) {
  oracle::TempDir dir("ppm");
  const auto img = gradient_image(5, 7, 1);
  write_ppm(dir.path() / "a.ppm", img);
  const auto back = read_ppm(dir.path() / "a.ppm");
  EXPECT_EQ(back.height, 5);
  EXPECT_EQ(back.width, 7);
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_THROW(read_ppm(dir.path() / "missing.ppm"), Error);
}

TEST(ImagePsnr, MatchesObjective) {
  auto a = gradient_image(4, 4, 0), b = a;
  EXPECT_TRUE(std::isinf(image_psnr(a, b)));
  b.pixels[0] = static_cast<std::uint8_t>(b.pixels[0] + 51);
  const double m = (51.0 / 255.0) * (51.0 / 255.0) / 48.0;
  EXPECT_NEAR(image_psnr(a, b), psnr(m), 1e-9);
  const auto t = torch::rand({3, 6, 5});
  const auto rgb = to_rgb_image(t);
  EXPECT_EQ(rgb.height, 6);
  EXPECT_EQ(rgb.width, 5);
  EXPECT_EQ(rgb.pixels[3 * (2 * 5 + 1) + 2], static_cast<std::uint8_t>(std::lround(t[2][2][1].item<double>() * 255.0)));
}

TEST(Codec, AdapterAvailable) {
  const auto adapter = CodecAdapter::from_environment();
  ASSERT_TRUE(adapter.available()) << adapter.executable();
  RgbImage decoded;
  const auto bytes = adapter.round_trip(gradient_image(32, 32, 2), 2.0, &decoded);
  EXPECT_GT(bytes, 0);
  EXPECT_EQ(decoded.height, 32);
  EXPECT_EQ(decoded.pixels.size(), 32u * 32u * 3u);
}

TEST(Codec, FitsBudgetAndIsMonotone) {
  const auto adapter = CodecAdapter::from_environment();
  const std::vector<std::int64_t> budgets{1500, 3000, 6000, 12000, kUnlimitedBits};
  for (int i = 0; i < 20; ++i) {
    const auto img = gradient_image(32, 32, i);
    double prev = -1e9;
    for (auto budget : budgets) {
      const auto r = codec_baseline(img, budget, adapter);
      if (budget != kUnlimitedBits && !r.fallback) ASSERT_LE(r.bytes * 8, budget);
      ASSERT_GE(r.psnr_db, prev - 1e-9) << "image " << i << " budget " << budget;
      prev = r.psnr_db;
    }
  }
}

TEST(Codec, TinyBudgetFallsBack) {
  const auto adapter = CodecAdapter::from_environment();
  const auto r = codec_baseline(gradient_image(32, 32, 3), 64, adapter);
  EXPECT_TRUE(r.fallback);
  EXPECT_TRUE(std::isfinite(r.psnr_db));
  EXPECT_FALSE(codec_baseline(gradient_image(32, 32, 3), kUnlimitedBits, adapter).fallback);
}

TEST(Codec, MissingAdapterIsUnavailable) {
  const CodecAdapter missing("/nonexistent/codec");
  EXPECT_FALSE(missing.available());
  EXPECT_THROW(codec_baseline(gradient_image(8, 8, 0), 1000, missing), UnavailableError);
  ::setenv(CodecAdapter::kEnvironmentVariable, "/nonexistent/codec", 1);
  EXPECT_EQ(CodecAdapter::from_environment().executable(), "/nonexistent/codec");
  ::unsetenv(CodecAdapter::kEnvironmentVariable);
}

TEST(TdSystem, SpendsNChannelUses) {
  torch::manual_seed(5);
  TdSystemImpl model(JsccConfig::low_res(), 768, 0.5);
  EXPECT_EQ(model.n1, 384);
  EXPECT_EQ(model.n2, 384);
  torch::NoGradGuard guard;
  const auto s1 = torch::rand({2, 3, 32, 32}), s2 = torch::rand({2, 3, 32, 32});
  const auto out = model.forward(s1, s2, LinkState::exact({13.0, 8.0, 0.0}, 2, 1));
  EXPECT_EQ(out.channel_uses, 768);
  EXPECT_EQ(out.s1_hat.sizes(), s1.sizes());
  EXPECT_GE(out.s2_hat.min().item<double>(), 0.0);
  EXPECT_LE(out.s2_hat.max().item<double>(), 1.0);
}

TEST(PaSystem, SpendsNChannelUses) {
  torch::manual_seed(6);
  PaSystemImpl model(JsccConfig::low_res(), 768, 0.5);
  torch::NoGradGuard guard;
  const auto s1 = torch::rand({2, 3, 32, 32}), s2 = torch::rand({2, 3, 32, 32});
  const auto out = model.forward(s1, s2, LinkState::exact({13.0, 8.0, 0.0}, 2, 1));
  EXPECT_EQ(out.channel_uses, 768);
  EXPECT_EQ(out.s2_hat.sizes(), s2.sizes());
  EXPECT_THROW(PaSystemImpl(JsccConfig::low_res(), 768, 1.0), ConfigError);
}
