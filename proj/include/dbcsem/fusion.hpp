#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <utility>
#include <vector>

#include "dbcsem/channel.hpp"
#include "dbcsem/jscc.hpp"
#include "dbcsem/nn_core.hpp"

namespace dbcsem {

/// c1 = ceil(alpha * omega), c2 = floor((1 - alpha) * omega). Both must be
/// positive.
std::pair<std::int64_t, std::int64_t> split_channels(double alpha, std::int64_t omega);

struct FusionConfig {
  std::int64_t omega = 16;
  double alpha = 0.5;
  std::int64_t n_sf = 2;
  std::int64_t n_df = 2;
  std::int64_t channel_uses = 768;
  std::int64_t embed_dim = 64;
  std::int64_t kernel = 3;

  void validate() const;
  std::pair<std::int64_t, std::int64_t> split() const { return split_channels(alpha, omega); }

  static FusionConfig low_res();
  static FusionConfig high_res();
};

/// Channels of the h x w grid that carries the 2n latent reals.
std::int64_t latent_channels(std::int64_t channel_uses, const JsccConfig& jscc);

/// Flattens B x C x h x w to B x reals, dropping any trailing padding.
torch::Tensor pack_latent(const torch::Tensor& grid, std::int64_t reals);

/// Inverse of pack_latent followed by a convolution to out_dim channels and a
/// channel LayerNorm (the de-fusion "patch embedding").
class LatentUnpackImpl : public torch::nn::Module {
 public:
  LatentUnpackImpl(std::int64_t reals, std::int64_t height, std::int64_t width, std::int64_t out_dim,
                   std::int64_t kernel);
  torch::Tensor forward(const torch::Tensor& iq);

  std::int64_t reals;
  std::int64_t height;
  std::int64_t width;
  std::int64_t grid_channels;
  torch::nn::Conv2d conv{nullptr};
  torch::nn::LayerNorm norm{nullptr};
};
TORCH_MODULE(LatentUnpack);

/// Three-stage semantic fusion: concatenation + convolutional embedding,
/// n_sf CSI-aware transformer blocks conditioned on both users' CSI, and a
/// convolutional compression to 2n reals that are power-normalized.
class SemanticFusionImpl : public torch::nn::Module {
 public:
  SemanticFusionImpl(const FusionConfig& fusion, const JsccConfig& jscc);
  ChannelSymbols forward(const torch::Tensor& x1e, const torch::Tensor& x2e, const torch::Tensor& v);

  FusionConfig fusion;
  JsccConfig jscc;
  torch::nn::Conv2d embed{nullptr};
  torch::nn::LayerNorm norm{nullptr};
  std::vector<nn::CsiTransformerBlock> blocks;
  torch::nn::Conv2d compress{nullptr};
};
TORCH_MODULE(SemanticFusion);

/// Per-user de-fusion: unpack the received latent to a token grid and run
/// n_df CSI-aware blocks conditioned on that user's CSI only.
class SemanticDefusionImpl : public torch::nn::Module {
 public:
  SemanticDefusionImpl(const FusionConfig& fusion, const JsccConfig& jscc);
  torch::Tensor forward(const ChannelSymbols& y, const torch::Tensor& v);

  FusionConfig fusion;
  JsccConfig jscc;
  LatentUnpack unpack{nullptr};
  std::vector<nn::CsiTransformerBlock> blocks;
};
TORCH_MODULE(SemanticDefusion);

ChannelSymbols fuse(SemanticFusion& fusion, CsiPair& csi, const torch::Tensor& x1e, const torch::Tensor& x2e,
                    const torch::Tensor& snr1_db, const torch::Tensor& snr2_db);
torch::Tensor defuse(SemanticDefusion& defusion, nn::CsiEncoder& csi, const ChannelSymbols& y,
                     const torch::Tensor& snr_db);

}  // namespace dbcsem
