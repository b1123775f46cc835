#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dbcsem {

/// One image's encoded features as a rows x cols matrix (channels x h*w).
struct FeatureMatrix {
  Eigen::MatrixXd values;

  FeatureMatrix() = default;
  explicit FeatureMatrix(Eigen::MatrixXd m);
  /// Row-major C x (h*w) view of a contiguous C x h x w float block.
  static FeatureMatrix from_chw(const float* data, std::int64_t channels, std::int64_t height, std::int64_t width);
};

/// |Pearson r| between the flattened matrices.
double pearson_abs(const FeatureMatrix& a, const FeatureMatrix& b);

/// Modified RV coefficient: column-centre, form X X^T and Y Y^T with zeroed
/// diagonals, return their normalized Frobenius inner product.
double rv2(const FeatureMatrix& a, const FeatureMatrix& b);

enum class SimilarityMetric { rv2, abs_pearson };

std::string to_string(SimilarityMetric metric);

struct SimilarityMatrix {
  Eigen::MatrixXd values;
  SimilarityMetric metric = SimilarityMetric::rv2;
  std::vector<std::int64_t> image_ids;

  /// Off-diagonal entries in row-major upper-triangle order.
  std::vector<double> off_diagonal() const;
};

SimilarityMatrix similarity_matrix(std::span<const FeatureMatrix> features, SimilarityMetric metric,
                                   std::vector<std::int64_t> image_ids = {});

/// CSV with the ids as header row and first column.
void write_csv(const SimilarityMatrix& matrix, const std::filesystem::path& file);

double median(std::vector<double> values);

}  // namespace dbcsem
