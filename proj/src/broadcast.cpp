#include "dbcsem/broadcast.hpp"

#include "dbcsem/errors.hpp"
#include "dbcsem/rng.hpp"

namespace dbcsem {

LinkState LinkState::exact(const ChannelState& state, std::int64_t batch, std::uint64_t noise_seed) {
  return estimated(state, state, batch, noise_seed);
}

LinkState LinkState::estimated(const ChannelState& truth, const ChannelState& reported, std::int64_t batch,
                               std::uint64_t noise_seed) {
  LinkState link;
  link.snr1_db = torch::full({batch}, truth.snr1_db, torch::kFloat64);
  link.snr2_db = torch::full({batch}, truth.snr2_db, torch::kFloat64);
  link.csi1_db = torch::full({batch}, reported.snr1_db, torch::kFloat64);
  link.csi2_db = torch::full({batch}, reported.snr2_db, torch::kFloat64);
  link.noise_seed = noise_seed;
  return link;
}

LinkState LinkState::to(torch::Dtype dtype) const {
  LinkState out = *this;
  out.snr1_db = snr1_db.to(dtype);
  out.snr2_db = snr2_db.to(dtype);
  out.csi1_db = csi1_db.to(dtype);
  out.csi2_db = csi2_db.to(dtype);
  return out;
}

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::sf:
      return "sf";
    case Scheme::td:
      return "td";
    case Scheme::pa:
      return "pa";
    case Scheme::sic:
      return "sic";
  }
  return "sf";
}

Scheme parse_scheme(const std::string& text) {
  if (text == "sf") return Scheme::sf;
  if (text == "td") return Scheme::td;
  if (text == "pa") return Scheme::pa;
  if (text == "sic") return Scheme::sic;
  throw ConfigError("unknown scheme: " + text);
}

SfSystemImpl::SfSystemImpl(const JsccConfig& jscc_, const FusionConfig& fusion_)
    : jscc(jscc_), fusion_config(fusion_) {
  jscc.validate();
  fusion_config.validate();
  const auto [c1, c2] = fusion_config.split();
  if (jscc.csi_aware) {
    tx_csi = register_module("tx_csi", CsiPair(jscc.transmitter_csi_options()));
    rx_csi1 = register_module("rx_csi1", nn::CsiEncoder(jscc.receiver_csi_options()));
    rx_csi2 = register_module("rx_csi2", nn::CsiEncoder(jscc.receiver_csi_options()));
  }
  encoder1 = register_module("encoder1", JsccEncoder(jscc, c1));
  encoder2 = register_module("encoder2", JsccEncoder(jscc, c2));
  fusion = register_module("fusion", SemanticFusion(fusion_config, jscc));
  defusion1 = register_module("defusion1", SemanticDefusion(fusion_config, jscc));
  defusion2 = register_module("defusion2", SemanticDefusion(fusion_config, jscc));
  decoder1 = register_module("decoder1", JsccDecoder(jscc));
  decoder2 = register_module("decoder2", JsccDecoder(jscc));
}

ChannelSymbols SfSystemImpl::broadcast(const torch::Tensor& s1, const torch::Tensor& s2, const torch::Tensor& csi1_db,
                                       const torch::Tensor& csi2_db) {
  torch::Tensor v;
  if (jscc.csi_aware) v = tx_csi(csi1_db, csi2_db);
  auto x1e = encoder1(s1, v);
  auto x2e = encoder2(s2, v);
  return fusion(x1e, x2e, v);
}

torch::Tensor SfSystemImpl::receive(int user, const ChannelSymbols& y, const torch::Tensor& csi_db) {
  if (user != 1 && user != 2) throw ConfigError("user must be 1 or 2");
  auto& csi = user == 1 ? rx_csi1 : rx_csi2;
  auto& defusion = user == 1 ? defusion1 : defusion2;
  auto& decoder = user == 1 ? decoder1 : decoder2;
  torch::Tensor v;
  if (jscc.csi_aware) v = csi(csi_db);
  return decoder(defusion(y, v), v);
}

Reconstruction SfSystemImpl::forward(const torch::Tensor& s1, const torch::Tensor& s2, const LinkState& link) {
  auto x = broadcast(s1, s2, link.csi1_db, link.csi2_db);
  auto y1 = transmit(x, snr_db_to_noise_power(link.snr1_db), derive_seed(link.noise_seed, {seed_tag::kNoiseUser1}));
  auto y2 = transmit(x, snr_db_to_noise_power(link.snr2_db), derive_seed(link.noise_seed, {seed_tag::kNoiseUser2}));
  Reconstruction out;
  out.s1_hat = receive(1, y1, link.csi1_db);
  out.s2_hat = receive(2, y2, link.csi2_db);
  out.channel_uses = x.n();
  return out;
}

}  // namespace dbcsem
