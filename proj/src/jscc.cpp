#include "dbcsem/jscc.hpp"

#include <cmath>
#include <string>

#include "dbcsem/errors.hpp"

namespace dbcsem {

void JsccConfig::validate() const {
  if (image_height <= 0 || image_width <= 0) throw ConfigError("image resolution must be positive");
  if (encoder.empty() || decoder.empty()) throw ConfigError("JSCC needs at least one encoder and one decoder stage");
  if (encoder.size() != decoder.size()) {
    throw ConfigError("decoder stage count must equal encoder stage count so the output is 3 x H x W");
  }
  for (std::size_t k = 0; k < encoder.size(); ++k) {
    if (encoder[k].depth < 1) throw ConfigError("encoder stage depth must be >= 1");
    if (k > 0 && encoder[k].embed_dim != 2 * encoder[k - 1].embed_dim) {
      throw ConfigError("patch merge doubles channels: encoder stage " + std::to_string(k + 1) + " needs embed_dim " +
                        std::to_string(2 * encoder[k - 1].embed_dim));
    }
  }
  for (std::size_t m = 0; m < decoder.size(); ++m) {
    if (decoder[m].depth < 1) throw ConfigError("decoder stage depth must be >= 1");
    if (m > 0 && 2 * decoder[m].embed_dim != decoder[m - 1].embed_dim) {
      throw ConfigError("reverse projection halves channels: decoder stage " + std::to_string(m + 1) +
                        " needs embed_dim " + std::to_string(decoder[m - 1].embed_dim / 2));
    }
  }
  const std::int64_t factor = patch << (encoder.size() - 1);
  if (image_height % factor != 0 || image_width % factor != 0) {
    throw ConfigError("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                      " is not divisible by the cumulative patch factor " + std::to_string(factor));
  }
  // the decoder's reverse projections each double the resolution
  const std::int64_t decoder_factor = std::int64_t{1} << decoder.size();
  if (decoder_factor != factor) {
    throw ConfigError("decoder upsampling factor " + std::to_string(decoder_factor) +
                      " does not restore the encoder's factor " + std::to_string(factor));
  }
  if (csi_aware && (csi_dim <= 0 || decoder_csi_dim <= 0)) throw ConfigError("CSI vector lengths must be positive");
  for (std::size_t k = 0; k < encoder.size(); ++k) {
    const auto [h, w] = encoder_resolution(k);
    block(encoder[k].embed_dim, 0).validate(h, w);
  }
}

std::pair<std::int64_t, std::int64_t> JsccConfig::encoder_resolution(std::size_t stage) const {
  const std::int64_t factor = patch << stage;
  return {image_height / factor, image_width / factor};
}

std::pair<std::int64_t, std::int64_t> JsccConfig::latent_resolution() const {
  return encoder_resolution(encoder.size() - 1);
}

nn::BlockConfig JsccConfig::block(std::int64_t embed_dim, std::size_t index_in_stage) const {
  nn::BlockConfig cfg;
  cfg.embed_dim = embed_dim;
  cfg.num_heads = num_heads;
  cfg.window = window;
  cfg.mlp_ratio = mlp_ratio;
  cfg.shift = alternate_shift && index_in_stage % 2 == 1;
  return cfg;
}

JsccConfig JsccConfig::low_res() { return JsccConfig{}; }

JsccConfig JsccConfig::high_res() {
  JsccConfig cfg;
  cfg.image_height = 128;
  cfg.image_width = 128;
  cfg.encoder = {{2, 64}, {4, 128}};
  cfg.decoder = {{4, 128}, {2, 64}};
  return cfg;
}

CsiPairImpl::CsiPairImpl(const nn::CsiEncoderOptions& options) {
  user1 = register_module("csi_user1", nn::CsiEncoder(options));
  user2 = register_module("csi_user2", nn::CsiEncoder(options));
}

torch::Tensor CsiPairImpl::forward(const torch::Tensor& snr1_db, const torch::Tensor& snr2_db) {
  return torch::cat({user1(snr1_db), user2(snr2_db)}, 1);
}

JsccEncoderImpl::JsccEncoderImpl(const JsccConfig& cfg, std::int64_t out_channels_)
    : config(cfg), out_channels(out_channels_) {
  config.validate();
  embed = register_module("embed", nn::PatchEmbed(3, config.encoder.front().embed_dim, config.patch));
  merges = register_module("merges", torch::nn::ModuleList());
  for (std::size_t k = 0; k < config.encoder.size(); ++k) {
    const auto& stage = config.encoder[k];
    if (k > 0) merges->push_back(nn::PatchMerge(config.encoder[k - 1].embed_dim));
    const auto [h, w] = config.encoder_resolution(k);
    std::vector<nn::CsiTransformerBlock> blocks;
    for (std::int64_t i = 0; i < stage.depth; ++i) {
      blocks.push_back(register_module(
          "stage" + std::to_string(k) + "_block" + std::to_string(i),
          nn::CsiTransformerBlock(config.block(stage.embed_dim, static_cast<std::size_t>(i)), h, w,
                                  config.encoder_csi_length())));
    }
    stages.push_back(std::move(blocks));
  }
  head = register_module("head", nn::ConvHead(config.encoder.back().embed_dim, out_channels));
}

torch::Tensor JsccEncoderImpl::forward(const torch::Tensor& images, const torch::Tensor& v) {
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != config.image_height ||
      images.size(3) != config.image_width) {
    throw ConfigError("encoder expects B x 3 x " + std::to_string(config.image_height) + " x " +
                      std::to_string(config.image_width) + " images");
  }
  auto x = embed(images);
  for (std::size_t k = 0; k < stages.size(); ++k) {
    if (k > 0) x = merges[k - 1]->as<nn::PatchMerge>()->forward(x);
    for (auto& block : stages[k]) x = block(x, v);
  }
  return head(x);
}

JsccDecoderImpl::JsccDecoderImpl(const JsccConfig& cfg) : config(cfg) {
  config.validate();
  auto [h, w] = config.latent_resolution();
  for (std::size_t m = 0; m < config.decoder.size(); ++m) {
    const auto& stage = config.decoder[m];
    std::vector<nn::CsiTransformerBlock> blocks;
    for (std::int64_t i = 0; i < stage.depth; ++i) {
      blocks.push_back(register_module(
          "stage" + std::to_string(m) + "_block" + std::to_string(i),
          nn::CsiTransformerBlock(config.block(stage.embed_dim, static_cast<std::size_t>(i)), h, w,
                                  config.decoder_csi_length())));
    }
    stages.push_back(std::move(blocks));
    const bool last = m + 1 == config.decoder.size();
    const auto out_dim = last ? 3 : config.decoder[m + 1].embed_dim;
    reverses.push_back(register_module("reverse" + std::to_string(m), nn::PatchReverse(stage.embed_dim, out_dim)));
    h *= 2;
    w *= 2;
  }
  if (h * w * 3 != 3 * config.image_height * config.image_width) {
    throw ConfigError("decoder output element count does not equal 3HW");
  }
}

torch::Tensor JsccDecoderImpl::forward(const torch::Tensor& y_df, const torch::Tensor& v) {
  const auto [h, w] = config.latent_resolution();
  if (y_df.dim() != 4 || y_df.size(1) != config.decoder_input_dim() || y_df.size(2) != h || y_df.size(3) != w) {
    throw ConfigError("decoder expects B x " + std::to_string(config.decoder_input_dim()) + " x " + std::to_string(h) +
                      " x " + std::to_string(w) + " features");
  }
  auto x = y_df;
  for (std::size_t m = 0; m < stages.size(); ++m) {
    for (auto& block : stages[m]) x = block(x, v);
    x = reverses[m](x);
  }
  if (x.size(1) * x.size(2) * x.size(3) != 3 * config.image_height * config.image_width) {
    throw ConfigError("decoder output cannot be reshaped to 3 x H x W");
  }
  return torch::sigmoid(x.reshape({x.size(0), 3, config.image_height, config.image_width}));
}

torch::Tensor encode(JsccEncoder& encoder, CsiPair& csi, const torch::Tensor& images, const torch::Tensor& snr1_db,
                     const torch::Tensor& snr2_db) {
  torch::Tensor v;
  if (encoder->config.csi_aware) v = csi(snr1_db, snr2_db);
  return encoder(images, v);
}

torch::Tensor decode(JsccDecoder& decoder, nn::CsiEncoder& csi, const torch::Tensor& y_df,
                     const torch::Tensor& snr_db) {
  torch::Tensor v;
  if (decoder->config.csi_aware) v = csi(snr_db);
  return decoder(y_df, v);
}

std::int64_t cbr_channel_uses(std::int64_t height, std::int64_t width, double cbr) {
  if (!(cbr > 0)) throw ConfigError("CBR must be positive");
  const auto n = static_cast<std::int64_t>(std::llround(cbr * 3.0 * static_cast<double>(height * width)));
  if (n < 1) throw ConfigError("CBR yields fewer than one channel use");
  return n;
}

}  // namespace dbcsem
