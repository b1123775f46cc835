#include "dbcsem/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dbcsem/errors.hpp"

namespace dbcsem {

FeatureMatrix::FeatureMatrix(Eigen::MatrixXd m) : values(std::move(m)) {
  if (values.rows() < 2 || values.cols() < 2) throw ConfigError("feature matrices need at least 2 rows and 2 columns");
  if (!values.allFinite()) throw ConfigError("feature matrix has non-finite entries");
}

FeatureMatrix FeatureMatrix::from_chw(const float* data, std::int64_t channels, std::int64_t height,
                                      std::int64_t width) {
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> view(
      data, channels, height * width);
  return FeatureMatrix(view.cast<double>());
}

double pearson_abs(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.values.size() != b.values.size()) throw ConfigError("pearson: element counts differ");
  const Eigen::Map<const Eigen::VectorXd> x(a.values.data(), a.values.size());
  const Eigen::Map<const Eigen::VectorXd> y(b.values.data(), b.values.size());
  const Eigen::VectorXd xc = x.array() - x.mean();
  const Eigen::VectorXd yc = y.array() - y.mean();
  const double sx = xc.norm(), sy = yc.norm();
  if (sx == 0 || sy == 0) throw UndefinedError("pearson: zero-variance input");
  return std::min(1.0, std::abs(xc.dot(yc) / (sx * sy)));
}

namespace {

Eigen::MatrixXd zeroed_cross_product(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd centred = m.rowwise() - m.colwise().mean();
  Eigen::MatrixXd s = centred * centred.transpose();
  s.diagonal().setZero();
  return s;
}

}  // namespace

double rv2(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.values.rows() != b.values.rows()) throw ConfigError("rv2: row counts differ");
  const auto sx = zeroed_cross_product(a.values);
  const auto sy = zeroed_cross_product(b.values);
  const double nx = sx.norm(), ny = sy.norm();
  if (nx == 0 || ny == 0) throw UndefinedError("rv2: matrix is zero after centring");
  return std::clamp((sx.array() * sy.array()).sum() / (nx * ny), -1.0, 1.0);
}

std::string to_string(SimilarityMetric metric) { return metric == SimilarityMetric::rv2 ? "rv2" : "abs_pearson"; }

std::vector<double> SimilarityMatrix::off_diagonal() const {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < values.cols(); ++j) out.push_back(values(i, j));
  }
  return out;
}

SimilarityMatrix similarity_matrix(std::span<const FeatureMatrix> features, SimilarityMetric metric,
                                   std::vector<std::int64_t> image_ids) {
  const auto n = static_cast<Eigen::Index>(features.size());
  if (n < 2) throw ConfigError("similarity matrix needs at least 2 features");
  for (const auto& f : features) {
    if (f.values.rows() != features[0].values.rows() || f.values.cols() != features[0].values.cols()) {
      throw ConfigError("similarity matrix: inconsistent feature shapes");
    }
  }
  if (image_ids.empty()) {
    image_ids.resize(features.size());
    std::iota(image_ids.begin(), image_ids.end(), 0);
  }
  if (static_cast<Eigen::Index>(image_ids.size()) != n) throw ConfigError("similarity matrix: id count mismatch");
  SimilarityMatrix out;
  out.metric = metric;
  out.image_ids = std::move(image_ids);
  out.values.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      double v = 0;
      try {
        v = metric == SimilarityMetric::rv2 ? rv2(features[static_cast<std::size_t>(i)], features[static_cast<std::size_t>(j)])
                                            : pearson_abs(features[static_cast<std::size_t>(i)],
                                                          features[static_cast<std::size_t>(j)]);
      } catch (const Error& e) {
        throw UndefinedError("pair (" + std::to_string(i) + ", " + std::to_string(j) + "): " + e.what());
      }
      out.values(i, j) = v;
      out.values(j, i) = v;
    }
  }
  return out;
}

void write_csv(const SimilarityMatrix& matrix, const std::filesystem::path& file) {
  if (!file.parent_path().empty()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out.precision(17);
  out << to_string(matrix.metric);
  for (auto id : matrix.image_ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < matrix.values.rows(); ++i) {
    out << matrix.image_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < matrix.values.cols(); ++j) out << ',' << matrix.values(i, j);
    out << '\n';
  }
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty set");
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    m = (m + *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid))) / 2.0;
  }
  return m;
}

}  // namespace dbcsem
