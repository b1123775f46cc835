#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <utility>
#include <vector>

#include "dbcsem/nn_core.hpp"

namespace dbcsem {

struct StageSpec {
  std::int64_t depth = 4;
  std::int64_t embed_dim = 64;
};

/// Architecture of the CSI-aware JSCC encoder/decoder pair.
///
/// Encoder stage 1 is a patch embedding (factor `patch`), each later stage a
/// patch merge (factor 2, channels doubled); every stage then runs `depth`
/// transformer blocks. Decoder stage m runs its blocks and then a reverse
/// projection (factor 2); the last one emits the 3 image channels.
struct JsccConfig {
  std::int64_t image_height = 32;
  std::int64_t image_width = 32;
  std::int64_t patch = 2;
  std::vector<StageSpec> encoder{{4, 64}};
  std::vector<StageSpec> decoder{{4, 64}};
  std::int64_t num_heads = 4;
  std::int64_t window = 4;
  double mlp_ratio = 2.0;
  bool alternate_shift = true;
  // t: per-user CSI vector length at the transmitter; u: at a receiver
  std::int64_t csi_dim = 16;
  std::int64_t decoder_csi_dim = 16;
  std::int64_t csi_pos_dim = 64;
  std::int64_t csi_hidden = 64;
  // false builds the no-CSI ablation (no CSI encoders, no injection)
  bool csi_aware = true;

  void validate() const;
  /// Feature-map resolution after encoder stage k (0-based).
  std::pair<std::int64_t, std::int64_t> encoder_resolution(std::size_t stage) const;
  /// Resolution of the encoder output, the fusion module and decoder stage 1.
  std::pair<std::int64_t, std::int64_t> latent_resolution() const;
  std::int64_t decoder_input_dim() const { return decoder.front().embed_dim; }
  nn::BlockConfig block(std::int64_t embed_dim, std::size_t index_in_stage) const;
  nn::CsiEncoderOptions transmitter_csi_options() const { return {csi_pos_dim, csi_hidden, csi_dim}; }
  nn::CsiEncoderOptions receiver_csi_options() const { return {csi_pos_dim, csi_hidden, decoder_csi_dim}; }
  /// Length of the concatenated transmitter CSI vector, 0 in the ablation.
  std::int64_t encoder_csi_length() const { return csi_aware ? 2 * csi_dim : 0; }
  std::int64_t decoder_csi_length() const { return csi_aware ? decoder_csi_dim : 0; }

  /// One stage, 4 + 4 blocks at 32 x 32.
  static JsccConfig low_res();
  /// Two stages, (2, 4) encoder and (4, 2) decoder blocks at 128 x 128.
  static JsccConfig high_res();
};

/// The transmitter's two CSI encoders; their outputs are concatenated.
class CsiPairImpl : public torch::nn::Module {
 public:
  explicit CsiPairImpl(const nn::CsiEncoderOptions& options);
  torch::Tensor forward(const torch::Tensor& snr1_db, const torch::Tensor& snr2_db);

  nn::CsiEncoder user1{nullptr};
  nn::CsiEncoder user2{nullptr};
};
TORCH_MODULE(CsiPair);

class JsccEncoderImpl : public torch::nn::Module {
 public:
  JsccEncoderImpl(const JsccConfig& config, std::int64_t out_channels);
  /// images: B x 3 x H x W; v: B x 2t concatenated CSI (ignored in the ablation).
  torch::Tensor forward(const torch::Tensor& images, const torch::Tensor& v);

  JsccConfig config;
  std::int64_t out_channels;
  nn::PatchEmbed embed{nullptr};
  torch::nn::ModuleList merges{nullptr};
  std::vector<std::vector<nn::CsiTransformerBlock>> stages;
  nn::ConvHead head{nullptr};
};
TORCH_MODULE(JsccEncoder);

class JsccDecoderImpl : public torch::nn::Module {
 public:
  explicit JsccDecoderImpl(const JsccConfig& config);
  /// y_df: B x C x h x w (decoder stage-1 layout); v: B x u. Output in [0, 1].
  torch::Tensor forward(const torch::Tensor& y_df, const torch::Tensor& v);

  JsccConfig config;
  std::vector<std::vector<nn::CsiTransformerBlock>> stages;
  std::vector<nn::PatchReverse> reverses;
};
TORCH_MODULE(JsccDecoder);

/// Encoder output for user j given both users' SNRs.
torch::Tensor encode(JsccEncoder& encoder, CsiPair& csi, const torch::Tensor& images, const torch::Tensor& snr1_db,
                     const torch::Tensor& snr2_db);

/// Reconstruction for user j from its de-fused features and its own SNR only.
torch::Tensor decode(JsccDecoder& decoder, nn::CsiEncoder& csi, const torch::Tensor& y_df,
                     const torch::Tensor& snr_db);

/// n = round(cbr * 3 * H * W) complex channel uses.
std::int64_t cbr_channel_uses(std::int64_t height, std::int64_t width, double cbr);

}  // namespace dbcsem
