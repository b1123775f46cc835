#include "dbcsem/fusion.hpp"

#include <cmath>
#include <string>

#include "dbcsem/errors.hpp"

namespace dbcsem {

std::pair<std::int64_t, std::int64_t> split_channels(double alpha, std::int64_t omega) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("fusion ratio must lie in [0, 1]");
  if (omega < 2) throw ConfigError("fusion input channels must be >= 2");
  double share = alpha * static_cast<double>(omega);
  // alpha * omega that is an integer up to rounding must not ceil upwards
  if (std::abs(share - std::round(share)) < 1e-9) share = std::round(share);
  const auto c1 = static_cast<std::int64_t>(std::ceil(share));
  const auto c2 = static_cast<std::int64_t>(std::floor(static_cast<double>(omega) - share));
  if (c1 == 0 || c2 == 0) {
    throw ConfigError("fusion ratio " + std::to_string(alpha) + " leaves a user with no channels (c1=" +
                      std::to_string(c1) + ", c2=" + std::to_string(c2) + ")");
  }
  return {c1, c2};
}

void FusionConfig::validate() const {
  split();
  if (n_sf < 1 || n_df < 1) throw ConfigError("fusion and de-fusion depths must be >= 1");
  if (channel_uses < 1) throw ConfigError("channel uses must be >= 1");
  if (embed_dim < 1) throw ConfigError("fusion embed_dim must be positive");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("fusion kernel must be a positive odd size");
}

FusionConfig FusionConfig::low_res() { return FusionConfig{}; }

FusionConfig FusionConfig::high_res() {
  FusionConfig cfg;
  cfg.n_sf = 6;
  cfg.n_df = 6;
  cfg.channel_uses = 6144;
  cfg.embed_dim = 128;
  return cfg;
}

std::int64_t latent_channels(std::int64_t channel_uses, const JsccConfig& jscc) {
  const auto [h, w] = jscc.latent_resolution();
  const auto reals = 2 * channel_uses;
  return (reals + h * w - 1) / (h * w);
}

torch::Tensor pack_latent(const torch::Tensor& grid, std::int64_t reals) {
  auto flat = grid.reshape({grid.size(0), -1});
  if (flat.size(1) < reals) throw ConfigError("latent grid holds fewer reals than requested");
  return flat.size(1) == reals ? flat : flat.slice(1, 0, reals);
}

LatentUnpackImpl::LatentUnpackImpl(std::int64_t reals_, std::int64_t h, std::int64_t w, std::int64_t out_dim,
                                   std::int64_t kernel)
    : reals(reals_), height(h), width(w), grid_channels((reals_ + h * w - 1) / (h * w)) {
  conv = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(grid_channels, out_dim, kernel).padding(kernel / 2)));
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({out_dim})));
}

torch::Tensor LatentUnpackImpl::forward(const torch::Tensor& iq) {
  if (iq.dim() != 2 || iq.size(1) != reals) {
    throw ConfigError("received latent has " + std::to_string(iq.dim() == 2 ? iq.size(1) : -1) + " reals, expected " +
                      std::to_string(reals));
  }
  auto padded = iq;
  const auto capacity = grid_channels * height * width;
  if (capacity > reals) padded = torch::constant_pad_nd(iq, {0, capacity - reals});
  auto grid = padded.reshape({iq.size(0), grid_channels, height, width});
  return nn::channel_layer_norm(norm, conv(grid));
}

SemanticFusionImpl::SemanticFusionImpl(const FusionConfig& fusion_, const JsccConfig& jscc_)
    : fusion(fusion_), jscc(jscc_) {
  fusion.validate();
  jscc.validate();
  const auto [h, w] = jscc.latent_resolution();
  if ((2 * fusion.channel_uses) % (h * w) != 0) {
    throw ConfigError("2n = " + std::to_string(2 * fusion.channel_uses) + " reals do not tile the " +
                      std::to_string(h) + "x" + std::to_string(w) + " latent grid");
  }
  const auto pad = fusion.kernel / 2;
  embed = register_module(
      "embed", torch::nn::Conv2d(torch::nn::Conv2dOptions(fusion.omega, fusion.embed_dim, fusion.kernel).padding(pad)));
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({fusion.embed_dim})));
  for (std::int64_t i = 0; i < fusion.n_sf; ++i) {
    blocks.push_back(register_module("block" + std::to_string(i),
                                     nn::CsiTransformerBlock(jscc.block(fusion.embed_dim, static_cast<std::size_t>(i)),
                                                             h, w, jscc.encoder_csi_length())));
  }
  compress = register_module(
      "compress",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(fusion.embed_dim, latent_channels(fusion.channel_uses, jscc),
                                                 fusion.kernel)
                            .padding(pad)));
}

ChannelSymbols SemanticFusionImpl::forward(const torch::Tensor& x1e, const torch::Tensor& x2e, const torch::Tensor& v) {
  const auto [c1, c2] = fusion.split();
  if (x1e.dim() != 4 || x2e.dim() != 4) throw ConfigError("fusion expects B x c x h x w features");
  if (x1e.size(1) != c1 || x2e.size(1) != c2) {
    throw ConfigError("fusion expects (" + std::to_string(c1) + ", " + std::to_string(c2) + ") channels, got (" +
                      std::to_string(x1e.size(1)) + ", " + std::to_string(x2e.size(1)) + ")");
  }
  if (x1e.size(2) != x2e.size(2) || x1e.size(3) != x2e.size(3) || x1e.size(0) != x2e.size(0)) {
    throw ConfigError("fusion inputs differ in batch or spatial dims");
  }
  auto x = nn::channel_layer_norm(norm, embed(torch::cat({x1e, x2e}, 1)));
  for (auto& block : blocks) x = block(x, v);
  return power_normalize(compress(x).reshape({x.size(0), -1}));
}

SemanticDefusionImpl::SemanticDefusionImpl(const FusionConfig& fusion_, const JsccConfig& jscc_)
    : fusion(fusion_), jscc(jscc_) {
  fusion.validate();
  jscc.validate();
  const auto [h, w] = jscc.latent_resolution();
  const auto dim = jscc.decoder_input_dim();
  unpack = register_module("unpack", LatentUnpack(2 * fusion.channel_uses, h, w, dim, fusion.kernel));
  for (std::int64_t i = 0; i < fusion.n_df; ++i) {
    blocks.push_back(register_module("block" + std::to_string(i),
                                     nn::CsiTransformerBlock(jscc.block(dim, static_cast<std::size_t>(i)), h, w,
                                                             jscc.decoder_csi_length())));
  }
}

torch::Tensor SemanticDefusionImpl::forward(const ChannelSymbols& y, const torch::Tensor& v) {
  if (y.n() != fusion.channel_uses) {
    throw ConfigError("de-fusion expects " + std::to_string(fusion.channel_uses) + " channel uses, got " +
                      std::to_string(y.n()));
  }
  auto x = unpack(y.iq);
  for (auto& block : blocks) x = block(x, v);
  return x;
}

ChannelSymbols fuse(SemanticFusion& fusion, CsiPair& csi, const torch::Tensor& x1e, const torch::Tensor& x2e,
                    const torch::Tensor& snr1_db, const torch::Tensor& snr2_db) {
  torch::Tensor v;
  if (fusion->jscc.csi_aware) v = csi(snr1_db, snr2_db);
  return fusion(x1e, x2e, v);
}

torch::Tensor defuse(SemanticDefusion& defusion, nn::CsiEncoder& csi, const ChannelSymbols& y,
                     const torch::Tensor& snr_db) {
  torch::Tensor v;
  if (defusion->jscc.csi_aware) v = csi(snr_db);
  return defusion(y, v);
}

}  // namespace dbcsem
