#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace dbcsem::nn {

double swish(double x);
torch::Tensor swish(const torch::Tensor& x);

/// Parameter-free sinusoidal embedding of a scalar position (the SNR in dB):
/// e[2k] = sin(p * base^(-2k/dim)), e[2k+1] = cos(p * base^(-2k/dim)).
/// snr_db is a length-B tensor, the result is B x dim.
torch::Tensor sinusoidal_embed(const torch::Tensor& snr_db, std::int64_t dim, double base = 1e4);
std::vector<double> sinusoidal_embed(double snr_db, std::int64_t dim, double base = 1e4);

struct CsiEncoderOptions {
  std::int64_t pos_dim = 64;
  std::int64_t hidden = 64;
  std::int64_t out_dim = 64;
};

/// SNR -> sinusoidal embedding -> FC -> swish -> FC.
class CsiEncoderImpl : public torch::nn::Module {
 public:
  explicit CsiEncoderImpl(const CsiEncoderOptions& options);
  torch::Tensor forward(const torch::Tensor& snr_db);

  CsiEncoderOptions options;
  torch::nn::Linear fc1{nullptr};
  torch::nn::Linear fc2{nullptr};
};
TORCH_MODULE(CsiEncoder);

/// Adds a CSI map to a feature map viewed as a C x (h*w) matrix: v -> swish ->
/// FC gives a C x 1 column, replicated over all h*w token positions.
class CsiInjectImpl : public torch::nn::Module {
 public:
  CsiInjectImpl(std::int64_t csi_dim, std::int64_t channels);
  /// B x C column derived from v.
  torch::Tensor column(const torch::Tensor& v);
  torch::Tensor forward(const torch::Tensor& feature, const torch::Tensor& v);

  std::int64_t csi_dim;
  std::int64_t channels;
  torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(CsiInject);

struct BlockConfig {
  std::int64_t embed_dim = 64;
  std::int64_t num_heads = 4;
  std::int64_t window = 4;
  double mlp_ratio = 2.0;
  bool shift = false;

  void validate(std::int64_t height, std::int64_t width) const;
};

/// Multi-head self-attention inside non-overlapping windows with a learned
/// relative position bias.
class WindowAttentionImpl : public torch::nn::Module {
 public:
  WindowAttentionImpl(std::int64_t dim, std::int64_t num_heads, std::int64_t window);
  /// windows: (B * nW) x N x C; mask: nW x N x N additive, or undefined.
  torch::Tensor forward(const torch::Tensor& windows, const torch::Tensor& mask);

  std::int64_t dim;
  std::int64_t num_heads;
  std::int64_t window;
  torch::nn::Linear qkv{nullptr};
  torch::nn::Linear proj{nullptr};
  torch::Tensor relative_bias_table;

 private:
  torch::Tensor relative_index_;  // N*N int64, not a registered buffer
};
TORCH_MODULE(WindowAttention);

/// CSI-conditioned windowed transformer block: CSI map injection, then
/// pre-norm (shifted) window attention and pre-norm MLP, each with a residual.
/// Shape preserving on B x C x h x w. csi_dim == 0 builds a block without
/// CSI injection.
class CsiTransformerBlockImpl : public torch::nn::Module {
 public:
  CsiTransformerBlockImpl(const BlockConfig& config, std::int64_t height, std::int64_t width,
                          std::int64_t csi_dim);
  torch::Tensor forward(const torch::Tensor& feature, const torch::Tensor& v);

  BlockConfig config;
  std::int64_t height;
  std::int64_t width;
  std::int64_t shift_size = 0;
  CsiInject csi_inject{nullptr};
  torch::nn::LayerNorm norm1{nullptr};
  WindowAttention attn{nullptr};
  torch::nn::LayerNorm norm2{nullptr};
  torch::nn::Linear fc1{nullptr};
  torch::nn::Linear fc2{nullptr};

 private:
  torch::Tensor shift_mask_;
};
TORCH_MODULE(CsiTransformerBlock);

/// Strided convolution from images to a token grid, then channel LayerNorm.
class PatchEmbedImpl : public torch::nn::Module {
 public:
  PatchEmbedImpl(std::int64_t in_channels, std::int64_t embed_dim, std::int64_t patch);
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t patch;
  torch::nn::Conv2d proj{nullptr};
  torch::nn::LayerNorm norm{nullptr};
};
TORCH_MODULE(PatchEmbed);

/// Halves h and w, doubles channels (2x2 neighbourhood -> LayerNorm -> linear).
class PatchMergeImpl : public torch::nn::Module {
 public:
  explicit PatchMergeImpl(std::int64_t dim);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::LayerNorm norm{nullptr};
  torch::nn::Linear reduction{nullptr};
};
TORCH_MODULE(PatchMerge);

/// Inverse resizing of PatchMerge: doubles h and w, emits out_dim channels
/// (LayerNorm -> linear -> pixel shuffle).
class PatchReverseImpl : public torch::nn::Module {
 public:
  PatchReverseImpl(std::int64_t in_dim, std::int64_t out_dim, std::int64_t factor = 2);
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t factor;
  torch::nn::LayerNorm norm{nullptr};
  torch::nn::Linear expand{nullptr};
};
TORCH_MODULE(PatchReverse);

/// Pointwise convolution to the requested channel count.
class ConvHeadImpl : public torch::nn::Module {
 public:
  ConvHeadImpl(std::int64_t in_channels, std::int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(ConvHead);

/// Applies a LayerNorm over the channel axis of a B x C x h x w map.
torch::Tensor channel_layer_norm(torch::nn::LayerNorm& norm, const torch::Tensor& x);

struct ParameterReport {
  std::int64_t total = 0;
  // CSI encoders and per-block injection layers
  std::int64_t csi = 0;

  double csi_share() const { return total == 0 ? 0.0 : static_cast<double>(csi) / static_cast<double>(total); }
};

/// Tallies parameters; a parameter counts as CSI-related when its qualified
/// name contains "csi".
ParameterReport count_parameters(const torch::nn::Module& module);

}  // namespace dbcsem::nn
