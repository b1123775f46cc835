#include "dbcsem/baselines.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dbcsem/errors.hpp"
#include "dbcsem/fusion.hpp"
#include "dbcsem/rng.hpp"

#ifndef DBCSEM_DEFAULT_CODEC
#define DBCSEM_DEFAULT_CODEC ""
#endif

namespace dbcsem {

namespace fs = std::filesystem;

std::pair<std::int64_t, std::int64_t> td_schedule(std::int64_t n, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("TD ratio must lie in (0, 1)");
  if (n < 2) throw ConfigError("TD needs at least 2 channel uses");
  const auto n1 = static_cast<std::int64_t>(std::llround(beta * static_cast<double>(n)));
  const auto n2 = n - n1;
  if (n1 < 1 || n2 < 1) throw ConfigError("TD ratio leaves a user with no channel uses");
  return {n1, n2};
}

namespace {

void register_receivers(BroadcastModelImpl& self, const JsccConfig& jscc, nn::CsiEncoder& rx1, nn::CsiEncoder& rx2,
                        CsiPair& tx) {
  if (!jscc.csi_aware) return;
  tx = self.register_module("tx_csi", CsiPair(jscc.transmitter_csi_options()));
  rx1 = self.register_module("rx_csi1", nn::CsiEncoder(jscc.receiver_csi_options()));
  rx2 = self.register_module("rx_csi2", nn::CsiEncoder(jscc.receiver_csi_options()));
}

torch::Tensor receiver_csi(const JsccConfig& jscc, nn::CsiEncoder& csi, const torch::Tensor& snr_db) {
  return jscc.csi_aware ? csi(snr_db) : torch::Tensor();
}

}  // namespace

TdSystemImpl::TdSystemImpl(const JsccConfig& jscc_, std::int64_t channel_uses, double beta) : jscc(jscc_) {
  jscc.validate();
  std::tie(n1, n2) = td_schedule(channel_uses, beta);
  register_receivers(*this, jscc, rx_csi1, rx_csi2, tx_csi);
  const auto [h, w] = jscc.latent_resolution();
  encoder1 = register_module("encoder1", JsccEncoder(jscc, latent_channels(n1, jscc)));
  encoder2 = register_module("encoder2", JsccEncoder(jscc, latent_channels(n2, jscc)));
  unpack1 = register_module("unpack1", LatentUnpack(2 * n1, h, w, jscc.decoder_input_dim(), 3));
  unpack2 = register_module("unpack2", LatentUnpack(2 * n2, h, w, jscc.decoder_input_dim(), 3));
  decoder1 = register_module("decoder1", JsccDecoder(jscc));
  decoder2 = register_module("decoder2", JsccDecoder(jscc));
}

Reconstruction TdSystemImpl::forward(const torch::Tensor& s1, const torch::Tensor& s2, const LinkState& link) {
  torch::Tensor v;
  if (jscc.csi_aware) v = tx_csi(link.csi1_db, link.csi2_db);
  auto x1 = power_normalize(pack_latent(encoder1(s1, v), 2 * n1));
  auto x2 = power_normalize(pack_latent(encoder2(s2, v), 2 * n2));
  // each user listens only to its own slot
  auto y1 = transmit(x1, snr_db_to_noise_power(link.snr1_db), derive_seed(link.noise_seed, {seed_tag::kNoiseUser1}));
  auto y2 = transmit(x2, snr_db_to_noise_power(link.snr2_db), derive_seed(link.noise_seed, {seed_tag::kNoiseUser2}));
  auto v1 = receiver_csi(jscc, rx_csi1, link.csi1_db);
  auto v2 = receiver_csi(jscc, rx_csi2, link.csi2_db);
  Reconstruction out;
  out.s1_hat = decoder1(unpack1(y1.iq), v1);
  out.s2_hat = decoder2(unpack2(y2.iq), v2);
  out.channel_uses = x1.n() + x2.n();
  return out;
}

ChannelSymbols pa_superpose(const ChannelSymbols& x1, const ChannelSymbols& x2, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("PA ratio must lie in [0, 1]");
  if (x1.iq.sizes() != x2.iq.sizes()) throw ConfigError("PA inputs differ in length");
  ChannelSymbols out;
  if (gamma == 1.0) {
    out.iq = x1.iq;
  } else if (gamma == 0.0) {
    out.iq = x2.iq;
  } else {
    out.iq = std::sqrt(gamma) * x1.iq + std::sqrt(1.0 - gamma) * x2.iq;
  }
  return out;
}

PaSystemImpl::PaSystemImpl(const JsccConfig& jscc_, std::int64_t channel_uses_, double gamma_)
    : jscc(jscc_), channel_uses(channel_uses_), gamma(gamma_) {
  jscc.validate();
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("PA ratio must lie in (0, 1)");
  if (channel_uses < 1) throw ConfigError("channel uses must be >= 1");
  register_receivers(*this, jscc, rx_csi1, rx_csi2, tx_csi);
  const auto [h, w] = jscc.latent_resolution();
  const auto k = latent_channels(channel_uses, jscc);
  encoder1 = register_module("encoder1", JsccEncoder(jscc, k));
  encoder2 = register_module("encoder2", JsccEncoder(jscc, k));
  unpack1 = register_module("unpack1", LatentUnpack(2 * channel_uses, h, w, jscc.decoder_input_dim(), 3));
  unpack2 = register_module("unpack2", LatentUnpack(2 * channel_uses, h, w, jscc.decoder_input_dim(), 3));
  decoder1 = register_module("decoder1", JsccDecoder(jscc));
  decoder2 = register_module("decoder2", JsccDecoder(jscc));
}

Reconstruction PaSystemImpl::forward(const torch::Tensor& s1, const torch::Tensor& s2, const LinkState& link) {
  torch::Tensor v;
  if (jscc.csi_aware) v = tx_csi(link.csi1_db, link.csi2_db);
  auto x1 = power_normalize(pack_latent(encoder1(s1, v), 2 * channel_uses));
  auto x2 = power_normalize(pack_latent(encoder2(s2, v), 2 * channel_uses));
  auto x = pa_superpose(x1, x2, gamma);
  auto y1 = transmit(x, snr_db_to_noise_power(link.snr1_db), derive_seed(link.noise_seed, {seed_tag::kNoiseUser1}));
  auto y2 = transmit(x, snr_db_to_noise_power(link.snr2_db), derive_seed(link.noise_seed, {seed_tag::kNoiseUser2}));
  auto v1 = receiver_csi(jscc, rx_csi1, link.csi1_db);
  auto v2 = receiver_csi(jscc, rx_csi2, link.csi2_db);
  Reconstruction out;
  out.s1_hat = decoder1(unpack1(y1.iq), v1);
  out.s2_hat = decoder2(unpack2(y2.iq), v2);
  out.channel_uses = x.n();
  return out;
}

SicRates sic_rates(double zeta, double snr1_db, double snr2_db) {
  if (!(zeta > 0.0 && zeta < 1.0)) throw ConfigError("SIC power coefficient must lie in (0, 1)");
  if (!(snr1_db > snr2_db)) throw ConfigError("SIC rates need a degraded pair (snr1 > snr2)");
  const double s1 = snr_db_to_noise_power(snr1_db);
  const double s2 = snr_db_to_noise_power(snr2_db);
  SicRates r;
  r.r1 = std::log2(1.0 + zeta / s1);
  r.r2 = std::log2(1.0 + (1.0 - zeta) / (zeta + s2));
  return r;
}

std::pair<std::int64_t, std::int64_t> sic_bit_budgets(std::int64_t n, const SicRates& rates) {
  const auto nd = static_cast<double>(n);
  return {static_cast<std::int64_t>(std::floor(nd * rates.r1)), static_cast<std::int64_t>(std::floor(nd * rates.r2))};
}

void write_ppm(const fs::path& file, const RgbImage& image) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw Error("write failure: " + file.string());
}

RgbImage read_ppm(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot read " + file.string());
  std::string magic;
  in >> magic;
  auto next_int = [&] {
    // skip whitespace and comment lines
    while (true) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string line;
        std::getline(in, line);
      } else {
        break;
      }
    }
    int v = 0;
    in >> v;
    return v;
  };
  RgbImage img;
  img.width = next_int();
  img.height = next_int();
  const int maxval = next_int();
  in.get();
  if (magic != "P6" || maxval != 255 || img.width <= 0 || img.height <= 0) {
    throw Error("unsupported PPM: " + file.string());
  }
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw Error("truncated PPM: " + file.string());
  return img;
}

CodecAdapter::CodecAdapter(fs::path executable) : executable_(std::move(executable)) {}

CodecAdapter CodecAdapter::from_environment() {
  if (const char* env = std::getenv(kEnvironmentVariable); env != nullptr && *env != '\0') return CodecAdapter(env);
  return CodecAdapter(DBCSEM_DEFAULT_CODEC);
}

bool CodecAdapter::available() const {
  return !executable_.empty() && fs::exists(executable_) && access(executable_.c_str(), X_OK) == 0;
}

namespace {

std::string quoted(const fs::path& p) {
  std::string out = "'";
  for (char c : p.string()) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

class ScratchDir {
 public:
  ScratchDir() {
    static std::atomic<std::uint64_t> counter{0};
    const auto tag = derive_seed(static_cast<std::uint64_t>(getpid()), {counter++});
    path_ = fs::temp_directory_path() / ("dbcsem-codec-" + std::to_string(tag));
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void run(const std::string& command) {
  const int status = std::system((command + " >/dev/null 2>&1").c_str());
  if (status != 0) throw UnavailableError("codec adapter command failed: " + command);
}

}  // namespace

std::int64_t CodecAdapter::round_trip(const RgbImage& image, double bpp, RgbImage* decoded) const {
  if (!available()) {
    throw UnavailableError("codec adapter not available (set " + std::string(kEnvironmentVariable) + "): " +
                           executable_.string());
  }
  ScratchDir scratch;
  const auto in = scratch.path() / "in.ppm";
  const auto bin = scratch.path() / "out.bin";
  const auto out = scratch.path() / "out.ppm";
  write_ppm(in, image);
  std::ostringstream rate;
  rate.precision(9);
  rate << bpp;
  run(quoted(executable_) + " encode " + quoted(in) + " " + quoted(bin) + " --rate " + rate.str());
  const auto bytes = static_cast<std::int64_t>(fs::file_size(bin));
  if (decoded != nullptr) {
    run(quoted(executable_) + " decode " + quoted(bin) + " " + quoted(out));
    *decoded = read_ppm(out);
  }
  return bytes;
}

double image_psnr(const RgbImage& reference, const RgbImage& test) {
  if (reference.pixels.size() != test.pixels.size()) throw ConfigError("psnr: image sizes differ");
  double acc = 0;
  for (std::size_t i = 0; i < reference.pixels.size(); ++i) {
    const double d = (static_cast<double>(reference.pixels[i]) - test.pixels[i]) / 255.0;
    acc += d * d;
  }
  const double m = acc / static_cast<double>(reference.pixels.size());
  return m == 0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / m);
}

RgbImage to_rgb_image(const torch::Tensor& chw) {
  if (chw.dim() != 3 || chw.size(0) != 3) throw ConfigError("expected a 3 x H x W image");
  auto hwc = chw.detach().to(torch::kFloat32).clamp(0, 1).mul(255).round().to(torch::kUInt8).permute({1, 2, 0})
                 .contiguous();
  RgbImage img;
  img.height = static_cast<int>(chw.size(1));
  img.width = static_cast<int>(chw.size(2));
  img.pixels.assign(hwc.data_ptr<std::uint8_t>(), hwc.data_ptr<std::uint8_t>() + hwc.numel());
  return img;
}

namespace {

std::vector<double> rate_grid() {
  // log-spaced from 0.02 to 24 bpp
  constexpr int kPoints = 64;
  std::vector<double> grid(kPoints);
  for (int i = 0; i < kPoints; ++i) grid[i] = 0.02 * std::pow(24.0 / 0.02, static_cast<double>(i) / (kPoints - 1));
  return grid;
}

RgbImage mean_colour(const RgbImage& image) {
  RgbImage out = image;
  const std::size_t pixels = image.pixels.size() / 3;
  for (int ch = 0; ch < 3; ++ch) {
    double acc = 0;
    for (std::size_t i = 0; i < pixels; ++i) acc += image.pixels[i * 3 + ch];
    const auto m = static_cast<std::uint8_t>(std::lround(acc / static_cast<double>(pixels)));
    for (std::size_t i = 0; i < pixels; ++i) out.pixels[i * 3 + ch] = m;
  }
  return out;
}

}  // namespace

CodecResult codec_baseline(const RgbImage& image, std::int64_t bit_budget, const CodecAdapter& adapter) {
  static const std::vector<double> grid = rate_grid();
  if (!adapter.available()) {
    throw UnavailableError("codec baseline unavailable: no adapter at '" + adapter.executable().string() + "'");
  }
  auto fits = [&](std::size_t i) {
    if (bit_budget == kUnlimitedBits) return true;
    return adapter.round_trip(image, grid[i], nullptr) * 8 <= bit_budget;
  };
  CodecResult result;
  if (!fits(0)) {
    result.fallback = true;
    result.psnr_db = image_psnr(image, mean_colour(image));
    return result;
  }
  // largest grid index whose encoding fits
  std::size_t lo = 0, hi = grid.size() - 1;
  if (fits(hi)) {
    lo = hi;
  } else {
    while (hi - lo > 1) {
      const auto mid = (lo + hi) / 2;
      if (fits(mid)) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
  }
  RgbImage decoded;
  result.bytes = adapter.round_trip(image, grid[lo], &decoded);
  result.rate_bpp = grid[lo];
  result.psnr_db = image_psnr(image, decoded);
  return result;
}

std::vector<CodecResult> codec_baseline(const ImageBatch& batch, std::int64_t bit_budget,
                                        const CodecAdapter& adapter) {
  std::vector<CodecResult> out;
  out.reserve(static_cast<std::size_t>(batch.size()));
  for (std::int64_t i = 0; i < batch.size(); ++i) {
    out.push_back(codec_baseline(to_rgb_image(batch.data[i]), bit_budget, adapter));
  }
  return out;
}

}  // namespace dbcsem
