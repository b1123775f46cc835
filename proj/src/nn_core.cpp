#include "dbcsem/nn_core.hpp"

#include <cmath>

#include "dbcsem/errors.hpp"

namespace dbcsem::nn {

namespace F = torch::nn::functional;

double swish(double x) { return x / (1.0 + std::exp(-x)); }

torch::Tensor swish(const torch::Tensor& x) { return x * torch::sigmoid(x); }

torch::Tensor sinusoidal_embed(const torch::Tensor& snr_db, std::int64_t dim, double base) {
  if (dim <= 0 || dim % 2 != 0) throw ConfigError("sinusoidal embedding dimension must be positive and even");
  auto pos = snr_db.reshape({-1, 1});
  auto k = torch::arange(dim / 2, pos.options());
  auto freq = torch::pow(base, -2.0 * k / static_cast<double>(dim)).reshape({1, -1});
  auto angle = pos * freq;
  // B x (dim/2) x 2 -> B x dim gives sin, cos, sin, cos, ...
  return torch::stack({torch::sin(angle), torch::cos(angle)}, 2).reshape({pos.size(0), dim});
}

std::vector<double> sinusoidal_embed(double snr_db, std::int64_t dim, double base) {
  if (dim <= 0 || dim % 2 != 0) throw ConfigError("sinusoidal embedding dimension must be positive and even");
  std::vector<double> out(static_cast<std::size_t>(dim));
  for (std::int64_t k = 0; k < dim / 2; ++k) {
    const double angle = snr_db * std::pow(base, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    out[static_cast<std::size_t>(2 * k)] = std::sin(angle);
    out[static_cast<std::size_t>(2 * k + 1)] = std::cos(angle);
  }
  return out;
}

CsiEncoderImpl::CsiEncoderImpl(const CsiEncoderOptions& opts) : options(opts) {
  if (opts.pos_dim <= 0 || opts.hidden <= 0 || opts.out_dim <= 0) throw ConfigError("CSI encoder dims must be positive");
  fc1 = register_module("fc1", torch::nn::Linear(opts.pos_dim, opts.hidden));
  fc2 = register_module("fc2", torch::nn::Linear(opts.hidden, opts.out_dim));
}

torch::Tensor CsiEncoderImpl::forward(const torch::Tensor& snr_db) {
  auto pos = sinusoidal_embed(snr_db.to(fc1->weight.options()), options.pos_dim);
  return fc2(swish(fc1(pos)));
}

CsiInjectImpl::CsiInjectImpl(std::int64_t csi_dim_, std::int64_t channels_)
    : csi_dim(csi_dim_), channels(channels_) {
  if (csi_dim <= 0 || channels <= 0) throw ConfigError("CSI injection dims must be positive");
  fc = register_module("fc", torch::nn::Linear(csi_dim, channels));
}

torch::Tensor CsiInjectImpl::column(const torch::Tensor& v) {
  if (v.dim() != 2 || v.size(1) != csi_dim) {
    throw ConfigError("CSI vector has length " + std::to_string(v.dim() == 2 ? v.size(1) : -1) + ", expected " +
                      std::to_string(csi_dim));
  }
  return fc(swish(v));
}

torch::Tensor CsiInjectImpl::forward(const torch::Tensor& feature, const torch::Tensor& v) {
  if (feature.dim() != 4 || feature.size(1) != channels) {
    throw ConfigError("CSI injection expects a B x " + std::to_string(channels) + " x h x w feature map");
  }
  auto col = column(v);
  if (col.size(0) != feature.size(0) && col.size(0) != 1) throw ConfigError("CSI batch does not match feature batch");
  // B x C x 1 x 1 broadcasts over every token position
  return feature + col.reshape({col.size(0), channels, 1, 1});
}

void BlockConfig::validate(std::int64_t h, std::int64_t w) const {
  if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (window <= 0 || h % window != 0 || w % window != 0) {
    throw ConfigError("window " + std::to_string(window) + " does not divide the " + std::to_string(h) + "x" +
                      std::to_string(w) + " feature map");
  }
  if (!(mlp_ratio > 0)) throw ConfigError("mlp_ratio must be positive");
}

WindowAttentionImpl::WindowAttentionImpl(std::int64_t dim_, std::int64_t heads, std::int64_t window_)
    : dim(dim_), num_heads(heads), window(window_) {
  qkv = register_module("qkv", torch::nn::Linear(dim, 3 * dim));
  proj = register_module("proj", torch::nn::Linear(dim, dim));
  const auto span = 2 * window - 1;
  relative_bias_table =
      register_parameter("relative_bias_table", torch::randn({span * span, num_heads}) * 0.02);

  const auto n = window * window;
  relative_index_ = torch::empty({n * n}, torch::kInt64);
  auto* idx = relative_index_.data_ptr<std::int64_t>();
  for (std::int64_t a = 0; a < n; ++a) {
    for (std::int64_t b = 0; b < n; ++b) {
      const auto dy = a / window - b / window + window - 1;
      const auto dx = a % window - b % window + window - 1;
      idx[a * n + b] = dy * span + dx;
    }
  }
}

torch::Tensor WindowAttentionImpl::forward(const torch::Tensor& windows, const torch::Tensor& mask) {
  const auto bw = windows.size(0), n = windows.size(1), c = windows.size(2);
  const auto head_dim = c / num_heads;
  auto qkv_out = qkv(windows).reshape({bw, n, 3, num_heads, head_dim}).permute({2, 0, 3, 1, 4});
  auto q = qkv_out[0] * (1.0 / std::sqrt(static_cast<double>(head_dim)));
  auto k = qkv_out[1];
  auto v = qkv_out[2];
  auto logits = torch::matmul(q, k.transpose(-2, -1));
  auto bias = relative_bias_table.index_select(0, relative_index_).reshape({n, n, num_heads}).permute({2, 0, 1});
  logits = logits + bias.unsqueeze(0);
  if (mask.defined()) {
    const auto nw = mask.size(0);
    logits = logits.reshape({bw / nw, nw, num_heads, n, n}) + mask.to(logits.options()).unsqueeze(1).unsqueeze(0);
    logits = logits.reshape({bw, num_heads, n, n});
  }
  auto weights = torch::softmax(logits, -1);
  auto out = torch::matmul(weights, v).transpose(1, 2).reshape({bw, n, c});
  return proj(out);
}

namespace {

// B x h x w x C -> (B * nW) x (ws * ws) x C
torch::Tensor window_partition(const torch::Tensor& x, std::int64_t ws) {
  const auto b = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
  return x.reshape({b, h / ws, ws, w / ws, ws, c}).permute({0, 1, 3, 2, 4, 5}).reshape({-1, ws * ws, c});
}

torch::Tensor window_reverse(const torch::Tensor& windows, std::int64_t ws, std::int64_t b, std::int64_t h,
                             std::int64_t w) {
  const auto c = windows.size(2);
  return windows.reshape({b, h / ws, w / ws, ws, ws, c}).permute({0, 1, 3, 2, 4, 5}).reshape({b, h, w, c});
}

}  // namespace

CsiTransformerBlockImpl::CsiTransformerBlockImpl(const BlockConfig& cfg, std::int64_t h, std::int64_t w,
                                                 std::int64_t csi_dim)
    : config(cfg), height(h), width(w) {
  config.validate(h, w);
  if (csi_dim > 0) csi_inject = register_module("csi_inject", CsiInject(csi_dim, config.embed_dim));
  const auto c = config.embed_dim;
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
  attn = register_module("attn", WindowAttention(c, config.num_heads, config.window));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
  const auto hidden = static_cast<std::int64_t>(std::llround(config.mlp_ratio * static_cast<double>(c)));
  fc1 = register_module("fc1", torch::nn::Linear(c, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, c));

  const auto ws = config.window;
  // a window covering the whole map has nothing to shift into
  if (config.shift && (h > ws || w > ws)) shift_size = ws / 2;
  if (shift_size > 0) {
    auto regions = torch::zeros({1, h, w, 1});
    const std::int64_t bounds[3] = {0, -ws, -shift_size};
    float label = 0;
    auto slice = [&](std::int64_t extent, int i) {
      const auto lo = bounds[i] < 0 ? extent + bounds[i] : bounds[i];
      const auto hi = i == 0 ? extent - ws : (i == 1 ? extent - shift_size : extent);
      return std::pair{lo, hi};
    };
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const auto [r0, r1] = slice(h, i);
        const auto [c0, c1] = slice(w, j);
        regions.slice(1, r0, r1).slice(2, c0, c1).fill_(label);
        label += 1;
      }
    }
    auto labels = window_partition(regions, ws).squeeze(-1);  // nW x N
    auto differs = labels.unsqueeze(1) != labels.unsqueeze(2);
    shift_mask_ = torch::zeros(differs.sizes()).masked_fill(differs, -100.0);
  }
}

torch::Tensor CsiTransformerBlockImpl::forward(const torch::Tensor& feature, const torch::Tensor& v) {
  if (feature.dim() != 4 || feature.size(1) != config.embed_dim || feature.size(2) != height ||
      feature.size(3) != width) {
    throw ConfigError("transformer block expects B x " + std::to_string(config.embed_dim) + " x " +
                      std::to_string(height) + " x " + std::to_string(width));
  }
  auto x = csi_inject ? csi_inject(feature, v) : feature;
  const auto b = x.size(0);
  const auto ws = config.window;
  auto tokens = x.permute({0, 2, 3, 1});  // B h w C
  auto shortcut = tokens;
  auto t = norm1(tokens);
  if (shift_size > 0) t = torch::roll(t, {-shift_size, -shift_size}, {1, 2});
  auto attended = attn(window_partition(t, ws), shift_mask_);
  t = window_reverse(attended, ws, b, height, width);
  if (shift_size > 0) t = torch::roll(t, {shift_size, shift_size}, {1, 2});
  tokens = shortcut + t;
  tokens = tokens + fc2(torch::gelu(fc1(norm2(tokens))));
  return tokens.permute({0, 3, 1, 2});
}

torch::Tensor channel_layer_norm(torch::nn::LayerNorm& norm, const torch::Tensor& x) {
  return norm(x.permute({0, 2, 3, 1})).permute({0, 3, 1, 2});
}

PatchEmbedImpl::PatchEmbedImpl(std::int64_t in_channels, std::int64_t embed_dim, std::int64_t patch_)
    : patch(patch_) {
  if (patch < 1) throw ConfigError("patch size must be >= 1");
  proj = register_module("proj",
                         torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, embed_dim, patch).stride(patch)));
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed_dim})));
}

torch::Tensor PatchEmbedImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(2) % patch != 0 || x.size(3) % patch != 0) {
    throw ConfigError("patch embedding: spatial dims must be divisible by the patch size " + std::to_string(patch));
  }
  return channel_layer_norm(norm, proj(x));
}

PatchMergeImpl::PatchMergeImpl(std::int64_t dim) {
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({4 * dim})));
  reduction = register_module("reduction", torch::nn::Linear(torch::nn::LinearOptions(4 * dim, 2 * dim).bias(false)));
}

torch::Tensor PatchMergeImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(2) % 2 != 0 || x.size(3) % 2 != 0) {
    throw ConfigError("patch merge: spatial dims must be even");
  }
  auto t = x.permute({0, 2, 3, 1});  // B h w C
  auto merged = torch::cat({t.slice(1, 0, c10::nullopt, 2).slice(2, 0, c10::nullopt, 2),
                            t.slice(1, 1, c10::nullopt, 2).slice(2, 0, c10::nullopt, 2),
                            t.slice(1, 0, c10::nullopt, 2).slice(2, 1, c10::nullopt, 2),
                            t.slice(1, 1, c10::nullopt, 2).slice(2, 1, c10::nullopt, 2)},
                           -1);
  return reduction(norm(merged)).permute({0, 3, 1, 2});
}

PatchReverseImpl::PatchReverseImpl(std::int64_t in_dim, std::int64_t out_dim, std::int64_t factor_)
    : factor(factor_) {
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({in_dim})));
  expand = register_module("expand", torch::nn::Linear(in_dim, out_dim * factor * factor));
}

torch::Tensor PatchReverseImpl::forward(const torch::Tensor& x) {
  auto t = expand(norm(x.permute({0, 2, 3, 1}))).permute({0, 3, 1, 2});
  return F::pixel_shuffle(t, F::PixelShuffleFuncOptions(factor));
}

ConvHeadImpl::ConvHeadImpl(std::int64_t in_channels, std::int64_t out_channels) {
  if (out_channels < 1) throw ConfigError("conv head needs at least one output channel");
  conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 1)));
}

torch::Tensor ConvHeadImpl::forward(const torch::Tensor& x) { return conv(x); }

ParameterReport count_parameters(const torch::nn::Module& module) {
  ParameterReport report;
  for (const auto& item : module.named_parameters(/*recurse=*/true)) {
    const auto n = item.value().numel();
    report.total += n;
    if (item.key().find("csi") != std::string::npos) report.csi += n;
  }
  return report;
}

}  // namespace dbcsem::nn
