#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <string>

#include "dbcsem/channel.hpp"
#include "dbcsem/fusion.hpp"
#include "dbcsem/jscc.hpp"

namespace dbcsem {

/// Per-sample link conditions for one forward pass. The physical channel uses
/// snr*_db; the CSI encoders see csi*_db, which differs only under simulated
/// estimation error.
struct LinkState {
  torch::Tensor snr1_db;
  torch::Tensor snr2_db;
  torch::Tensor csi1_db;
  torch::Tensor csi2_db;
  std::uint64_t noise_seed = 0;

  static LinkState exact(const ChannelState& state, std::int64_t batch, std::uint64_t noise_seed);
  static LinkState estimated(const ChannelState& truth, const ChannelState& reported, std::int64_t batch,
                             std::uint64_t noise_seed);
  LinkState to(torch::Dtype dtype) const;
};

struct Reconstruction {
  torch::Tensor s1_hat;
  torch::Tensor s2_hat;
  // complex channel uses spent per image pair
  std::int64_t channel_uses = 0;
};

enum class Scheme { sf, td, pa, sic };

std::string to_string(Scheme scheme);
Scheme parse_scheme(const std::string& text);

/// A trainable end-to-end two-user broadcast system.
class BroadcastModelImpl : public torch::nn::Module {
 public:
  virtual Reconstruction forward(const torch::Tensor& s1, const torch::Tensor& s2, const LinkState& link) = 0;
  virtual Scheme scheme() const = 0;
};
using BroadcastModel = std::shared_ptr<BroadcastModelImpl>;

/// Semantic-fusion broadcasting: two CSI-aware JSCC encoders, the fusion
/// module, the broadcast AWGN channel, and per-user de-fusion + decoders.
class SfSystemImpl : public BroadcastModelImpl {
 public:
  SfSystemImpl(const JsccConfig& jscc, const FusionConfig& fusion);

  Reconstruction forward(const torch::Tensor& s1, const torch::Tensor& s2, const LinkState& link) override;
  Scheme scheme() const override { return Scheme::sf; }

  /// Transmitter half: the normalized joint latent.
  ChannelSymbols broadcast(const torch::Tensor& s1, const torch::Tensor& s2, const torch::Tensor& csi1_db,
                           const torch::Tensor& csi2_db);
  /// Receiver half for user 1 or 2.
  torch::Tensor receive(int user, const ChannelSymbols& y, const torch::Tensor& csi_db);

  JsccConfig jscc;
  FusionConfig fusion_config;
  CsiPair tx_csi{nullptr};
  JsccEncoder encoder1{nullptr};
  JsccEncoder encoder2{nullptr};
  SemanticFusion fusion{nullptr};
  nn::CsiEncoder rx_csi1{nullptr};
  nn::CsiEncoder rx_csi2{nullptr};
  SemanticDefusion defusion1{nullptr};
  SemanticDefusion defusion2{nullptr};
  JsccDecoder decoder1{nullptr};
  JsccDecoder decoder2{nullptr};
};

}  // namespace dbcsem
