#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace dbcsem {

/// Noise power for unit signal power at the given SNR: 10^(-snr/10).
double snr_db_to_noise_power(double snr_db);
torch::Tensor snr_db_to_noise_power(const torch::Tensor& snr_db);

/// Complex channel symbols, B x 2n reals with consecutive (re, im) pairs.
struct ChannelSymbols {
  torch::Tensor iq;
  // samples that were all-zero at normalization and were passed through as zeros
  std::int64_t degenerate_samples = 0;

  std::int64_t batch() const { return iq.size(0); }
  std::int64_t n() const { return iq.size(1) / 2; }
  /// Per-sample mean |x_i|^2.
  torch::Tensor power() const;
  torch::Tensor as_complex() const;
};

/// Scales every sample of a B x 2n real array to unit mean symbol power.
ChannelSymbols power_normalize(const torch::Tensor& raw);

/// y = x + n with circularly symmetric Gaussian noise of total per-symbol
/// variance noise_power (half per real component). noise_power is a scalar or
/// one value per sample.
ChannelSymbols transmit(const ChannelSymbols& x, const torch::Tensor& noise_power, std::uint64_t seed);
ChannelSymbols transmit(const ChannelSymbols& x, double noise_power, std::uint64_t seed);

/// CSI of the two-user degraded broadcast channel. sigma_e is the std (dB) of
/// the estimation error the state was perturbed with, 0 when exact.
struct ChannelState {
  double snr1_db = 13.0;
  double snr2_db = 8.0;
  double sigma_e = 0.0;

  bool degraded() const { return snr1_db > snr2_db; }
  double noise_power1() const { return snr_db_to_noise_power(snr1_db); }
  double noise_power2() const { return snr_db_to_noise_power(snr2_db); }
  double gap_db() const { return snr1_db - snr2_db; }
};

struct CsiSampling {
  double snr1_min_db = 5.0;
  double snr1_max_db = 19.0;
  std::vector<double> gaps_db{3.0, 5.0};

  void validate() const;
};

/// snr1 ~ U[min, max], gap drawn uniformly from the gap set, snr2 = snr1 - gap.
ChannelState sample_training_csi(std::uint64_t seed, const CsiSampling& sampling = {});

/// Adds independent N(0, sigma_e^2) dB errors to both users' SNRs (the
/// estimate a receiver or transmitter would feed to its CSI encoder).
ChannelState perturb_csi(const ChannelState& state, double sigma_e, std::uint64_t seed);

}  // namespace dbcsem
