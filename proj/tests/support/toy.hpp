#pragma once

// A sub-1000-parameter semantic-fusion system on 4x4 images, for exact
// gradient checks in double precision.

#include <torch/torch.h>

#include <memory>

#include "dbcsem/broadcast.hpp"
#include "dbcsem/channel.hpp"
#include "dbcsem/objective.hpp"

namespace toy {

inline dbcsem::JsccConfig jscc() {
  dbcsem::JsccConfig c;
  c.image_height = 4;
  c.image_width = 4;
  c.patch = 2;
  c.encoder = {{1, 2}};
  c.decoder = {{1, 2}};
  c.num_heads = 1;
  c.window = 2;
  c.mlp_ratio = 1.0;
  c.csi_dim = 2;
  c.decoder_csi_dim = 2;
  c.csi_pos_dim = 2;
  c.csi_hidden = 2;
  return c;
}

inline dbcsem::FusionConfig fusion() {
  dbcsem::FusionConfig f;
  f.omega = 2;
  f.alpha = 0.5;
  f.n_sf = 1;
  f.n_df = 1;
  f.channel_uses = 2;
  f.embed_dim = 2;
  f.kernel = 1;
  return f;
}

inline std::shared_ptr<dbcsem::SfSystemImpl> model(std::uint64_t seed) {
  torch::manual_seed(seed);
  auto m = std::make_shared<dbcsem::SfSystemImpl>(jscc(), fusion());
  m->to(torch::kDouble);
  return m;
}

struct Losses {
  torch::Tensor l1;
  torch::Tensor l2;
};

/// image -> encode -> fuse -> noiseless channel -> de-fuse -> decode.
inline Losses forward(dbcsem::SfSystemImpl& m, const torch::Tensor& s1, const torch::Tensor& s2) {
  const auto b = s1.size(0);
  auto csi1 = torch::full({b}, 13.0, torch::kDouble);
  auto csi2 = torch::full({b}, 8.0, torch::kDouble);
  auto x = m.broadcast(s1, s2, csi1, csi2);
  auto y1 = dbcsem::transmit(x, 0.0, 11);
  auto y2 = dbcsem::transmit(x, 0.0, 12);
  return {dbcsem::mse(s1, m.receive(1, y1, csi1)), dbcsem::mse(s2, m.receive(2, y2, csi2))};
}

inline std::pair<torch::Tensor, torch::Tensor> sources(std::uint64_t seed) {
  torch::manual_seed(seed);
  return {torch::rand({2, 3, 4, 4}, torch::kDouble), torch::rand({2, 3, 4, 4}, torch::kDouble)};
}

}  // namespace toy
