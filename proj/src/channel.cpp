#include "dbcsem/channel.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <random>

#include "dbcsem/errors.hpp"

namespace dbcsem {

double snr_db_to_noise_power(double snr_db) {
  if (!std::isfinite(snr_db)) throw ConfigError("SNR must be finite");
  return std::pow(10.0, -snr_db / 10.0);
}

torch::Tensor snr_db_to_noise_power(const torch::Tensor& snr_db) {
  return torch::pow(10.0, -snr_db / 10.0);
}

torch::Tensor ChannelSymbols::power() const {
  return iq.square().sum(1) / static_cast<double>(n());
}

torch::Tensor ChannelSymbols::as_complex() const {
  return torch::view_as_complex(iq.reshape({batch(), n(), 2}).contiguous());
}

ChannelSymbols power_normalize(const torch::Tensor& raw) {
  if (raw.dim() < 2) throw ConfigError("power_normalize expects a batched array");
  auto flat = raw.reshape({raw.size(0), -1});
  const auto reals = flat.size(1);
  if (reals < 2 || reals % 2 != 0) throw ConfigError("power_normalize needs an even number (>= 2) of reals per sample");
  const auto n = reals / 2;
  auto energy = flat.square().sum(1, /*keepdim=*/true);
  auto nonzero = energy > 0;
  // zero samples get scale 0 so neither the value nor its gradient blows up
  auto scale = torch::sqrt(static_cast<double>(n) / energy.clamp_min(1e-30)) * nonzero.to(flat.scalar_type());
  ChannelSymbols out;
  out.iq = flat * scale;
  out.degenerate_samples = (~nonzero).sum().item<std::int64_t>();
  return out;
}

ChannelSymbols transmit(const ChannelSymbols& x, const torch::Tensor& noise_power, std::uint64_t seed) {
  auto sigma2 = noise_power.to(x.iq.options()).reshape({-1});
  if (sigma2.numel() != 1 && sigma2.numel() != x.batch()) {
    throw ConfigError("noise power must be a scalar or one value per sample");
  }
  if ((sigma2 < 0).any().item<bool>()) throw ConfigError("noise power must be non-negative");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto noise = torch::randn(x.iq.sizes(), gen, x.iq.options().requires_grad(false));
  auto std_per_component = torch::sqrt(sigma2 / 2.0).reshape({-1, 1});
  ChannelSymbols y;
  y.iq = x.iq + noise * std_per_component;
  return y;
}

ChannelSymbols transmit(const ChannelSymbols& x, double noise_power, std::uint64_t seed) {
  if (noise_power < 0) throw ConfigError("noise power must be non-negative");
  return transmit(x, torch::full({1}, noise_power, x.iq.options().requires_grad(false)), seed);
}

void CsiSampling::validate() const {
  if (!(snr1_min_db <= snr1_max_db)) throw ConfigError("training SNR range is empty");
  if (gaps_db.empty()) throw ConfigError("training SNR gap set is empty");
  for (double g : gaps_db) {
    if (!(g > 0)) throw ConfigError("SNR gaps must be positive to keep the channel degraded");
  }
}

ChannelState sample_training_csi(std::uint64_t seed, const CsiSampling& sampling) {
  sampling.validate();
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> snr(sampling.snr1_min_db, sampling.snr1_max_db);
  std::uniform_int_distribution<std::size_t> pick(0, sampling.gaps_db.size() - 1);
  ChannelState state;
  state.snr1_db = snr(gen);
  state.snr2_db = state.snr1_db - sampling.gaps_db[pick(gen)];
  return state;
}

ChannelState perturb_csi(const ChannelState& state, double sigma_e, std::uint64_t seed) {
  if (sigma_e < 0) throw ConfigError("estimation-error std must be non-negative");
  ChannelState out = state;
  out.sigma_e = sigma_e;
  if (sigma_e == 0) return out;
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> delta(0.0, sigma_e);
  out.snr1_db += delta(gen);
  out.snr2_db += delta(gen);
  return out;
}

}  // namespace dbcsem
