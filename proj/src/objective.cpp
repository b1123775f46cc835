#include "dbcsem/objective.hpp"

#include <cmath>
#include <limits>

#include "dbcsem/errors.hpp"

namespace dbcsem {

namespace {

double floored(double value) { return std::max(value, kMseFloor); }

}  // namespace

torch::Tensor mse(const torch::Tensor& s, const torch::Tensor& s_hat) {
  if (s.sizes() != s_hat.sizes()) throw ConfigError("mse: shape mismatch");
  return (s - s_hat).square().mean();
}

double psnr(double mse_value) {
  if (mse_value < 0) throw ConfigError("mse must be non-negative");
  if (mse_value == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse_value);
}

bool mse_floored(double value) { return !(value >= kMseFloor); }

double l3(double l1, double l2) {
  const double a = std::log10(floored(l1));
  const double b = std::log10(floored(l2));
  return -(a * a) - (b * b);
}

torch::Tensor l3(const torch::Tensor& l1, const torch::Tensor& l2) {
  auto a = torch::log10(l1.clamp_min(kMseFloor));
  auto b = torch::log10(l2.clamp_min(kMseFloor));
  return -a.square() - b.square();
}

std::pair<double, double> l3_gradient_weights(double l1, double l2) {
  const double k = -2.0 / std::log(10.0);
  const double a = floored(l1), b = floored(l2);
  return {k * std::log10(a) / a, k * std::log10(b) / b};
}

double combined_baseline_loss(double l1, double l2, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  return lambda * l1 + (1.0 - lambda) * l2;
}

torch::Tensor combined_baseline_loss(const torch::Tensor& l1, const torch::Tensor& l2, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  return lambda * l1 + (1.0 - lambda) * l2;
}

LossReport LossReport::from_mse(double l1_, double l2_) {
  LossReport r;
  r.l1 = l1_;
  r.l2 = l2_;
  r.l3 = dbcsem::l3(l1_, l2_);
  r.psnr1 = psnr(floored(l1_));
  r.psnr2 = psnr(floored(l2_));
  std::tie(r.w1, r.w2) = l3_gradient_weights(l1_, l2_);
  r.loss = r.l3;
  return r;
}

}  // namespace dbcsem
