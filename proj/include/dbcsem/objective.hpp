#pragma once

#include <torch/torch.h>

#include <utility>

namespace dbcsem {

/// MSE values are clamped to this floor before any logarithm.
inline constexpr double kMseFloor = 1e-10;

/// Mean squared error over all pixels and the batch (differentiable).
torch::Tensor mse(const torch::Tensor& s, const torch::Tensor& s_hat);

/// 10 log10(1 / mse). mse == 0 returns +infinity.
double psnr(double mse_value);

/// -(log10 L1)^2 - (log10 L2)^2, equal to -(psnr1^2 + psnr2^2) / 100.
double l3(double l1, double l2);
torch::Tensor l3(const torch::Tensor& l1, const torch::Tensor& l2);

/// w_j = -(2 / ln 10) log10(L_j) / L_j, the factors with
/// grad L3 = w1 grad L1 + w2 grad L2.
std::pair<double, double> l3_gradient_weights(double l1, double l2);

/// lambda * L1 + (1 - lambda) * L2.
double combined_baseline_loss(double l1, double l2, double lambda);
torch::Tensor combined_baseline_loss(const torch::Tensor& l1, const torch::Tensor& l2, double lambda);

/// Whether an MSE needed the floor (non-positive or below kMseFloor).
bool mse_floored(double value);

struct LossReport {
  double l1 = 0;
  double l2 = 0;
  double l3 = 0;
  double psnr1 = 0;
  double psnr2 = 0;
  double w1 = 0;
  double w2 = 0;
  double lambda = -1;  // < 0 when the L3 objective is used
  double loss = 0;     // the value actually optimized

  static LossReport from_mse(double l1, double l2);
};

}  // namespace dbcsem
