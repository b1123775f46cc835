#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here calls into the library's math.

#include <torch/torch.h>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace oracle {

/// ||a - b|| / max(||b||, tiny) over flattened vectors.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

inline std::vector<double> to_vector(const torch::Tensor& t) {
  auto flat = t.detach().to(torch::kDouble).contiguous().reshape({-1});
  return {flat.data_ptr<double>(), flat.data_ptr<double>() + flat.numel()};
}

/// Central derivative of a scalar function.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

struct GradientComparison {
  std::vector<double> autograd;
  std::vector<double> numeric;
  double relative = 0;
};

/// Compares autograd gradients of a double-precision scalar loss with central
/// differences, perturbing every element of every tensor in place.
inline GradientComparison gradient_check(const std::function<torch::Tensor()>& loss,
                                         std::vector<torch::Tensor> tensors, double h = 1e-6) {
  GradientComparison out;
  for (auto& t : tensors) {
    if (t.grad().defined()) t.mutable_grad().zero_();
  }
  loss().backward();
  for (auto& t : tensors) {
    const auto g = to_vector(t.grad());
    out.autograd.insert(out.autograd.end(), g.begin(), g.end());
  }
  torch::NoGradGuard no_grad;
  for (auto& t : tensors) {
    auto flat = t.view({-1});
    for (std::int64_t i = 0; i < flat.numel(); ++i) {
      const double x0 = flat[i].item<double>();
      flat[i] = x0 + h;
      const double up = loss().item<double>();
      flat[i] = x0 - h;
      const double down = loss().item<double>();
      flat[i] = x0;
      out.numeric.push_back((up - down) / (2.0 * h));
    }
  }
  out.relative = relative_error(out.autograd, out.numeric);
  return out;
}

/// Differential entropy (nats) of a zero-mean real Gaussian of the given
/// variance, by Simpson quadrature of -p ln p over +-12 standard deviations.
inline double gaussian_entropy_numeric(double variance, int intervals = 40000) {
  const double sd = std::sqrt(variance);
  const double lo = -12.0 * sd, hi = 12.0 * sd;
  const double step = (hi - lo) / intervals;
  auto integrand = [&](double x) {
    const double p = std::exp(-x * x / (2.0 * variance)) / std::sqrt(2.0 * M_PI * variance);
    return p > 0 ? -p * std::log(p) : 0.0;
  };
  double sum = integrand(lo) + integrand(hi);
  for (int i = 1; i < intervals; ++i) sum += integrand(lo + i * step) * (i % 2 == 1 ? 4.0 : 2.0);
  return sum * step / 3.0;
}

/// I(X; X + N) in bits per complex use for circularly symmetric Gaussian X
/// (power s) and N (power noise), each real dimension integrated numerically.
inline double complex_gaussian_mi_bits(double s, double noise) {
  const double h_y = gaussian_entropy_numeric((s + noise) / 2.0);
  const double h_n = gaussian_entropy_numeric(noise / 2.0);
  return 2.0 * (h_y - h_n) / std::log(2.0);
}

/// Modified RV coefficient with explicit loops.
inline double rv2_loops(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  auto centred_products = [](const Eigen::MatrixXd& m) {
    const auto rows = m.rows(), cols = m.cols();
    std::vector<double> mean(static_cast<std::size_t>(cols), 0.0);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) mean[static_cast<std::size_t>(c)] += m(r, c);
      mean[static_cast<std::size_t>(c)] /= static_cast<double>(rows);
    }
    std::vector<double> s(static_cast<std::size_t>(rows * rows), 0.0);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < rows; ++j) {
        if (i == j) continue;
        double acc = 0;
        for (Eigen::Index c = 0; c < cols; ++c) {
          acc += (m(i, c) - mean[static_cast<std::size_t>(c)]) * (m(j, c) - mean[static_cast<std::size_t>(c)]);
        }
        s[static_cast<std::size_t>(i * rows + j)] = acc;
      }
    }
    return s;
  };
  const auto sa = centred_products(a), sb = centred_products(b);
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < sa.size(); ++k) {
    ab += sa[k] * sb[k];
    aa += sa[k] * sa[k];
    bb += sb[k] * sb[k];
  }
  return ab / std::sqrt(aa * bb);
}

/// Pearson r with explicit sums.
inline double pearson_loops(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Random orthogonal matrix from Householder QR of a Gaussian matrix.
inline Eigen::MatrixXd random_orthogonal(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(gen);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(gen);
  return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("dbcsem-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
