#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "dbcsem/broadcast.hpp"
#include "dbcsem/channel.hpp"
#include "dbcsem/datahub.hpp"
#include "dbcsem/jscc.hpp"

namespace dbcsem {

// ---- time division -------------------------------------------------------

/// n1 = round(beta * n), n2 = n - n1; both must be >= 1.
std::pair<std::int64_t, std::int64_t> td_schedule(std::int64_t n, double beta);

/// Two independent point-to-point CSI-aware JSCC links sharing the n channel
/// uses in time.
class TdSystemImpl : public BroadcastModelImpl {
 public:
  TdSystemImpl(const JsccConfig& jscc, std::int64_t channel_uses, double beta);

  Reconstruction forward(const torch::Tensor& s1, const torch::Tensor& s2, const LinkState& link) override;
  Scheme scheme() const override { return Scheme::td; }

  JsccConfig jscc;
  std::int64_t n1;
  std::int64_t n2;
  CsiPair tx_csi{nullptr};
  JsccEncoder encoder1{nullptr};
  JsccEncoder encoder2{nullptr};
  nn::CsiEncoder rx_csi1{nullptr};
  nn::CsiEncoder rx_csi2{nullptr};
  LatentUnpack unpack1{nullptr};
  LatentUnpack unpack2{nullptr};
  JsccDecoder decoder1{nullptr};
  JsccDecoder decoder2{nullptr};
};

// ---- power allocation ----------------------------------------------------

/// sqrt(gamma) x1 + sqrt(1 - gamma) x2.
ChannelSymbols pa_superpose(const ChannelSymbols& x1, const ChannelSymbols& x2, double gamma);

/// Both users' latents superposed with a fixed power split; each receiver
/// decodes its own image directly from the superposition.
class PaSystemImpl : public BroadcastModelImpl {
 public:
  PaSystemImpl(const JsccConfig& jscc, std::int64_t channel_uses, double gamma);

  Reconstruction forward(const torch::Tensor& s1, const torch::Tensor& s2, const LinkState& link) override;
  Scheme scheme() const override { return Scheme::pa; }

  JsccConfig jscc;
  std::int64_t channel_uses;
  double gamma;
  CsiPair tx_csi{nullptr};
  JsccEncoder encoder1{nullptr};
  JsccEncoder encoder2{nullptr};
  nn::CsiEncoder rx_csi1{nullptr};
  nn::CsiEncoder rx_csi2{nullptr};
  LatentUnpack unpack1{nullptr};
  LatentUnpack unpack2{nullptr};
  JsccDecoder decoder1{nullptr};
  JsccDecoder decoder2{nullptr};
};

// ---- superposition coding with SIC + external codec ----------------------

struct SicRates {
  double r1 = 0;  // bits per complex channel use
  double r2 = 0;
};

/// Degraded AWGN broadcast with unit total power, zeta of it on the better
/// user's layer: R2 = log2(1 + (1 - zeta) / (zeta + s2)),
/// R1 = log2(1 + zeta / s1), with s_j the noise powers.
SicRates sic_rates(double zeta, double snr1_db, double snr2_db);

/// b_j = floor(n * R_j) bits.
std::pair<std::int64_t, std::int64_t> sic_bit_budgets(std::int64_t n, const SicRates& rates);

/// 8-bit interleaved RGB image.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;
};

void write_ppm(const std::filesystem::path& file, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& file);

/// Subprocess boundary to an image codec honouring
///   <exe> encode <in.ppm> <out.bin> --rate <bpp>
///   <exe> decode <in.bin> <out.ppm>
class CodecAdapter {
 public:
  static constexpr const char* kEnvironmentVariable = "DBCSEM_CODEC";

  explicit CodecAdapter(std::filesystem::path executable);
  /// $DBCSEM_CODEC if set, otherwise the adapter built with this project.
  static CodecAdapter from_environment();

  bool available() const;
  const std::filesystem::path& executable() const { return executable_; }
  /// Encoded size in bytes at the given rate; the decoded image is written to
  /// `decoded` when non-null.
  std::int64_t round_trip(const RgbImage& image, double bpp, RgbImage* decoded) const;

 private:
  std::filesystem::path executable_;
};

struct CodecResult {
  double psnr_db = 0;
  std::int64_t bytes = 0;
  double rate_bpp = 0;
  // budget below the codec's smallest output: mean-colour reconstruction
  bool fallback = false;
};

inline constexpr std::int64_t kUnlimitedBits = std::numeric_limits<std::int64_t>::max();

/// Largest codec rate whose output fits in bit_budget (binary search over a
/// fixed log-spaced rate grid), decoded and scored against the original.
CodecResult codec_baseline(const RgbImage& image, std::int64_t bit_budget, const CodecAdapter& adapter);
std::vector<CodecResult> codec_baseline(const ImageBatch& batch, std::int64_t bit_budget,
                                        const CodecAdapter& adapter);

RgbImage to_rgb_image(const torch::Tensor& chw);
double image_psnr(const RgbImage& reference, const RgbImage& test);

}  // namespace dbcsem
