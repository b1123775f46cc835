#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dbcsem {

enum class Split { train, test };
enum class ResizePolicy { none, center_crop, resize };
enum class DatasetFormat { cifar_binary, stl10_binary, image_directory };

struct DatasetSpec {
  std::string name = "cifar10";
  int height = 32;
  int width = 32;
  static constexpr int channels = 3;
  // -1 loads everything the split provides
  std::int64_t train_count = -1;
  std::int64_t test_count = -1;
  std::filesystem::path source_path;
  ResizePolicy policy = ResizePolicy::none;
  DatasetFormat format = DatasetFormat::cifar_binary;

  void validate() const;
};

/// Batch of source images, B x 3 x H x W float32 in [0, 1], with the source
/// index of every sample.
struct ImageBatch {
  torch::Tensor data;
  std::vector<std::int64_t> ids;

  std::int64_t size() const { return data.defined() ? data.size(0) : 0; }
};

/// An in-memory split. Pixels are kept as uint8 and converted per batch.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, torch::Tensor pixels, std::vector<std::int64_t> ids);

  const std::string& name() const { return name_; }
  std::int64_t size() const { return pixels_.defined() ? pixels_.size(0) : 0; }
  int height() const { return static_cast<int>(pixels_.size(2)); }
  int width() const { return static_cast<int>(pixels_.size(3)); }
  std::int64_t id(std::int64_t position) const { return ids_.at(static_cast<std::size_t>(position)); }
  const std::vector<std::int64_t>& ids() const { return ids_; }

  ImageBatch gather(std::span<const std::int64_t> positions) const;
  ImageBatch all() const;
  Dataset head(std::int64_t count) const;

 private:
  std::string name_;
  torch::Tensor pixels_;  // N x 3 x H x W, uint8
  std::vector<std::int64_t> ids_;
};

Dataset load_dataset(const DatasetSpec& spec, Split split);

/// Seeded, order-deterministic batches over one dataset. The last batch of an
/// epoch may be short.
class BatchStream {
 public:
  BatchStream(const Dataset& dataset, std::int64_t batch_size, std::uint64_t seed, bool shuffle = true);

  std::int64_t batches_per_epoch() const;
  ImageBatch batch(std::int64_t epoch, std::int64_t index) const;

 private:
  const Dataset* dataset_;
  std::int64_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
};

enum class PairingMode { same_dataset_disjoint, cross_dataset };

struct PairingPolicy {
  PairingMode mode = PairingMode::same_dataset_disjoint;
  DatasetSpec user1;
  std::optional<DatasetSpec> user2;  // required for cross_dataset
};

struct ImagePair {
  ImageBatch s1;
  ImageBatch s2;
};

/// Forms (s1, s2) batches. In same-dataset mode s1 walks a seeded permutation
/// and s2 is drawn from a second permutation, rejecting ids already in s1.
/// Cross-dataset mode draws each user from its own dataset.
class PairSampler {
 public:
  PairSampler(const Dataset& shared, std::int64_t batch_size, std::uint64_t seed);
  PairSampler(const Dataset& user1, const Dataset& user2, std::int64_t batch_size, std::uint64_t seed);

  PairingMode mode() const { return mode_; }
  std::int64_t batch_size() const { return batch_size_; }
  std::int64_t batches_per_epoch() const;
  ImagePair pairs(std::int64_t epoch, std::int64_t index) const;
  /// Global step view: epoch = step / batches_per_epoch().
  ImagePair pairs(std::int64_t step) const;

 private:
  std::vector<std::int64_t> permutation(int stream, std::int64_t epoch, std::int64_t n) const;

  PairingMode mode_;
  const Dataset* user1_;
  const Dataset* user2_;
  std::int64_t batch_size_;
  std::uint64_t seed_;
};

/// First pair batch of a fresh sampler.
ImagePair make_pairs(const PairingPolicy& policy, std::int64_t batch_size, std::uint64_t seed);

std::vector<std::int64_t> seeded_permutation(std::int64_t n, std::uint64_t seed);

/// Writes a batch in the CIFAR binary record layout (label byte + planar RGB),
/// quantizing to 8 bits.
void write_cifar_binary(const std::filesystem::path& file, const ImageBatch& batch,
                        std::span<const std::uint8_t> labels = {});

/// Writes a procedurally generated, CIFAR-format corpus (data_batch_*.bin and
/// test_batch.bin) of smooth colored scenes. Used when no real dataset is
/// mounted.
void synthesize_cifar_corpus(const std::filesystem::path& dir, std::int64_t train_count,
                             std::int64_t test_count, std::uint64_t seed);

std::string to_string(ResizePolicy policy);
std::string to_string(DatasetFormat format);
ResizePolicy parse_resize_policy(const std::string& text);
DatasetFormat parse_dataset_format(const std::string& text);

}  // namespace dbcsem
