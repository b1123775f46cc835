#include "dbcsem/datahub.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

#include "dbcsem/errors.hpp"
#include "dbcsem/rng.hpp"

namespace dbcsem {

namespace fs = std::filesystem;

namespace {

constexpr int kCifarSide = 32;
constexpr std::int64_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;
constexpr int kStlSide = 96;
constexpr std::int64_t kStlRecord = 3 * kStlSide * kStlSide;

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open dataset file: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IngestError("read failure: " + path.string());
  return bytes;
}

// Fits an RGB image to the configured resolution according to the policy.
cv::Mat fit_resolution(const cv::Mat& rgb, const DatasetSpec& spec, const fs::path& origin) {
  if (rgb.rows == spec.height && rgb.cols == spec.width) return rgb;
  switch (spec.policy) {
    case ResizePolicy::none:
      throw ConfigError("image " + origin.string() + " is " + std::to_string(rgb.cols) + "x" +
                        std::to_string(rgb.rows) + " but dataset '" + spec.name + "' expects " +
                        std::to_string(spec.width) + "x" + std::to_string(spec.height) +
                        " and no crop/resize policy is set");
    case ResizePolicy::center_crop: {
      if (rgb.rows < spec.height || rgb.cols < spec.width) {
        throw ConfigError("image " + origin.string() + " is smaller than the center-crop target");
      }
      const int top = (rgb.rows - spec.height) / 2;
      const int left = (rgb.cols - spec.width) / 2;
      return rgb(cv::Rect(left, top, spec.width, spec.height)).clone();
    }
    case ResizePolicy::resize: {
      cv::Mat out;
      const bool shrinking = rgb.rows > spec.height || rgb.cols > spec.width;
      cv::resize(rgb, out, cv::Size(spec.width, spec.height), 0, 0,
                 shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
      return out;
    }
  }
  return rgb;
}

// Copies an interleaved RGB HxWx3 image into planar slot i of a uint8 tensor.
void store_planar(const cv::Mat& rgb, torch::Tensor& pixels, std::int64_t i) {
  auto* dst = pixels[i].data_ptr<std::uint8_t>();
  const int h = rgb.rows, w = rgb.cols;
  for (int r = 0; r < h; ++r) {
    const auto* row = rgb.ptr<cv::Vec3b>(r);
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) dst[(ch * h + r) * w + c] = row[c][ch];
    }
  }
}

std::int64_t resolve_count(std::int64_t requested, std::int64_t available, const std::string& what) {
  if (requested < 0) return available;
  if (requested > available) {
    throw ConfigError(what + ": requested " + std::to_string(requested) + " images but only " +
                      std::to_string(available) + " are available");
  }
  return requested;
}

std::vector<fs::path> cifar_files(const DatasetSpec& spec, Split split) {
  std::vector<fs::path> files;
  if (!fs::is_directory(spec.source_path)) {
    throw IngestError("dataset directory not found: " + spec.source_path.string());
  }
  if (split == Split::test) {
    files.push_back(spec.source_path / "test_batch.bin");
  } else {
    for (const auto& entry : fs::directory_iterator(spec.source_path)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("data_batch_", 0) == 0 && entry.path().extension() == ".bin") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IngestError("no data_batch_*.bin files under " + spec.source_path.string());
  }
  for (const auto& f : files) {
    if (!fs::exists(f)) throw IngestError("missing dataset file: " + f.string());
    if (fs::file_size(f) % kCifarRecord != 0) throw IngestError("corrupt CIFAR batch file: " + f.string());
  }
  return files;
}

std::int64_t cifar_record_count(const std::vector<fs::path>& files) {
  std::int64_t total = 0;
  for (const auto& f : files) total += static_cast<std::int64_t>(fs::file_size(f)) / kCifarRecord;
  return total;
}

Dataset load_cifar(const DatasetSpec& spec, Split split) {
  const auto files = cifar_files(spec, split);
  const std::int64_t available = cifar_record_count(files);
  const std::int64_t count = resolve_count(split == Split::train ? spec.train_count : spec.test_count, available,
                                           spec.name);
  const std::int64_t id_offset = split == Split::train ? 0 : cifar_record_count(cifar_files(spec, Split::train));

  auto pixels = torch::empty({count, 3, spec.height, spec.width}, torch::kUInt8);
  std::vector<std::int64_t> ids(static_cast<std::size_t>(count));
  std::int64_t loaded = 0;
  for (const auto& f : files) {
    if (loaded == count) break;
    const auto bytes = read_file(f);
    const std::int64_t records = static_cast<std::int64_t>(bytes.size()) / kCifarRecord;
    for (std::int64_t r = 0; r < records && loaded < count; ++r, ++loaded) {
      const auto* rec = reinterpret_cast<const std::uint8_t*>(bytes.data()) + r * kCifarRecord + 1;
      cv::Mat rgb(kCifarSide, kCifarSide, CV_8UC3);
      for (int y = 0; y < kCifarSide; ++y) {
        auto* row = rgb.ptr<cv::Vec3b>(y);
        for (int x = 0; x < kCifarSide; ++x) {
          for (int ch = 0; ch < 3; ++ch) row[x][ch] = rec[(ch * kCifarSide + y) * kCifarSide + x];
        }
      }
      store_planar(fit_resolution(rgb, spec, f), pixels, loaded);
      ids[static_cast<std::size_t>(loaded)] = id_offset + loaded;
    }
  }
  return Dataset(spec.name, pixels, std::move(ids));
}

Dataset load_stl10(const DatasetSpec& spec, Split split) {
  const auto file = spec.source_path / (split == Split::train ? "train_X.bin" : "test_X.bin");
  if (!fs::exists(file)) throw IngestError("missing dataset file: " + file.string());
  if (fs::file_size(file) % kStlRecord != 0) throw IngestError("corrupt STL-10 file: " + file.string());
  const std::int64_t available = static_cast<std::int64_t>(fs::file_size(file)) / kStlRecord;
  const std::int64_t count =
      resolve_count(split == Split::train ? spec.train_count : spec.test_count, available, spec.name);
  std::int64_t id_offset = 0;
  if (split == Split::test) {
    const auto train_file = spec.source_path / "train_X.bin";
    if (fs::exists(train_file)) id_offset = static_cast<std::int64_t>(fs::file_size(train_file)) / kStlRecord;
  }
  const auto bytes = read_file(file);
  auto pixels = torch::empty({count, 3, spec.height, spec.width}, torch::kUInt8);
  std::vector<std::int64_t> ids(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const auto* rec = reinterpret_cast<const std::uint8_t*>(bytes.data()) + i * kStlRecord;
    cv::Mat rgb(kStlSide, kStlSide, CV_8UC3);
    // STL-10 binaries store each channel column-major
    for (int y = 0; y < kStlSide; ++y) {
      auto* row = rgb.ptr<cv::Vec3b>(y);
      for (int x = 0; x < kStlSide; ++x) {
        for (int ch = 0; ch < 3; ++ch) row[x][ch] = rec[(ch * kStlSide + x) * kStlSide + y];
      }
    }
    store_planar(fit_resolution(rgb, spec, file), pixels, i);
    ids[static_cast<std::size_t>(i)] = id_offset + i;
  }
  return Dataset(spec.name, pixels, std::move(ids));
}

std::vector<fs::path> image_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Dataset load_image_directory(const DatasetSpec& spec, Split split) {
  if (!fs::is_directory(spec.source_path)) {
    throw IngestError("dataset directory not found: " + spec.source_path.string());
  }
  std::vector<fs::path> files;
  std::int64_t id_offset = 0;
  const auto split_dir = spec.source_path / (split == Split::train ? "train" : "test");
  if (fs::is_directory(spec.source_path / "train") || fs::is_directory(spec.source_path / "test")) {
    if (!fs::is_directory(split_dir)) throw IngestError("missing split directory: " + split_dir.string());
    files = image_files(split_dir);
    if (split == Split::test && fs::is_directory(spec.source_path / "train")) {
      id_offset = static_cast<std::int64_t>(image_files(spec.source_path / "train").size());
    }
  } else {
    // flat directory: the train split is the first train_count files in name
    // order, the test split follows it
    auto all = image_files(spec.source_path);
    const auto total = static_cast<std::int64_t>(all.size());
    const std::int64_t train_n = spec.train_count < 0 ? total : std::min(spec.train_count, total);
    if (split == Split::train) {
      files.assign(all.begin(), all.begin() + train_n);
    } else {
      files.assign(all.begin() + train_n, all.end());
      id_offset = train_n;
    }
  }
  const std::int64_t available = static_cast<std::int64_t>(files.size());
  if (available == 0) throw IngestError("no images found under " + spec.source_path.string());
  const std::int64_t count =
      resolve_count(split == Split::train ? spec.train_count : spec.test_count, available, spec.name);
  auto pixels = torch::empty({count, 3, spec.height, spec.width}, torch::kUInt8);
  std::vector<std::int64_t> ids(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const auto& path = files[static_cast<std::size_t>(i)];
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw IngestError("cannot decode image: " + path.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    store_planar(fit_resolution(rgb, spec, path), pixels, i);
    ids[static_cast<std::size_t>(i)] = id_offset + i;
  }
  return Dataset(spec.name, pixels, std::move(ids));
}

}  // namespace

void DatasetSpec::validate() const {
  if (height <= 0 || width <= 0) throw ConfigError("dataset '" + name + "' has non-positive resolution");
  if (train_count == 0 || test_count == 0) throw ConfigError("dataset '" + name + "' has an empty split");
  if (source_path.empty()) throw ConfigError("dataset '" + name + "' has no source path");
}

Dataset::Dataset(std::string name, torch::Tensor pixels, std::vector<std::int64_t> ids)
    : name_(std::move(name)), pixels_(std::move(pixels)), ids_(std::move(ids)) {
  if (pixels_.dim() != 4 || pixels_.size(1) != 3 || pixels_.scalar_type() != torch::kUInt8) {
    throw ConfigError("dataset pixels must be N x 3 x H x W uint8");
  }
  if (static_cast<std::int64_t>(ids_.size()) != pixels_.size(0)) throw ConfigError("dataset id count mismatch");
}

ImageBatch Dataset::gather(std::span<const std::int64_t> positions) const {
  if (positions.empty()) throw ConfigError("empty batch requested from dataset '" + name_ + "'");
  auto index = torch::from_blob(const_cast<std::int64_t*>(positions.data()),
                                {static_cast<std::int64_t>(positions.size())}, torch::kInt64);
  ImageBatch batch;
  batch.data = pixels_.index_select(0, index).to(torch::kFloat32).div_(255.0f);
  batch.ids.reserve(positions.size());
  for (auto p : positions) batch.ids.push_back(id(p));
  return batch;
}

ImageBatch Dataset::all() const {
  std::vector<std::int64_t> positions(static_cast<std::size_t>(size()));
  std::iota(positions.begin(), positions.end(), 0);
  return gather(positions);
}

Dataset Dataset::head(std::int64_t count) const {
  count = std::min(count, size());
  return Dataset(name_, pixels_.slice(0, 0, count).clone(),
                 std::vector<std::int64_t>(ids_.begin(), ids_.begin() + count));
}

Dataset load_dataset(const DatasetSpec& spec, Split split) {
  spec.validate();
  switch (spec.format) {
    case DatasetFormat::cifar_binary:
      return load_cifar(spec, split);
    case DatasetFormat::stl10_binary:
      return load_stl10(spec, split);
    case DatasetFormat::image_directory:
      return load_image_directory(spec, split);
  }
  throw ConfigError("unknown dataset format");
}

std::vector<std::int64_t> seeded_permutation(std::int64_t n, std::uint64_t seed) {
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 gen(seed);
  // Fisher-Yates with an explicit bounded draw so the order does not depend on
  // the standard library's shuffle implementation
  for (std::int64_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::int64_t>(gen() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

BatchStream::BatchStream(const Dataset& dataset, std::int64_t batch_size, std::uint64_t seed, bool shuffle)
    : dataset_(&dataset), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (batch_size_ < 1) throw ConfigError("batch size must be >= 1");
}

std::int64_t BatchStream::batches_per_epoch() const {
  return (dataset_->size() + batch_size_ - 1) / batch_size_;
}

ImageBatch BatchStream::batch(std::int64_t epoch, std::int64_t index) const {
  const auto n = dataset_->size();
  std::vector<std::int64_t> order;
  if (shuffle_) {
    order = seeded_permutation(n, derive_seed(seed_, {seed_tag::kPairs, static_cast<std::uint64_t>(epoch), 0}));
  } else {
    order.resize(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
  }
  const auto begin = index * batch_size_;
  const auto end = std::min(n, begin + batch_size_);
  if (begin >= n) throw ConfigError("batch index past end of epoch");
  return dataset_->gather(std::span<const std::int64_t>(order).subspan(static_cast<std::size_t>(begin),
                                                                       static_cast<std::size_t>(end - begin)));
}

PairSampler::PairSampler(const Dataset& shared, std::int64_t batch_size, std::uint64_t seed)
    : mode_(PairingMode::same_dataset_disjoint),
      user1_(&shared),
      user2_(&shared),
      batch_size_(batch_size),
      seed_(seed) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (2 * batch_size > shared.size()) {
    throw ConfigError("disjoint pairing needs 2 x batch size (" + std::to_string(2 * batch_size) +
                      ") <= dataset size (" + std::to_string(shared.size()) + ")");
  }
}

PairSampler::PairSampler(const Dataset& user1, const Dataset& user2, std::int64_t batch_size, std::uint64_t seed)
    : mode_(PairingMode::cross_dataset), user1_(&user1), user2_(&user2), batch_size_(batch_size), seed_(seed) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (batch_size > user1.size() || batch_size > user2.size()) {
    throw ConfigError("batch size exceeds a dataset size in cross-dataset pairing");
  }
}

std::int64_t PairSampler::batches_per_epoch() const {
  const auto n = mode_ == PairingMode::cross_dataset ? std::min(user1_->size(), user2_->size()) : user1_->size();
  return (n + batch_size_ - 1) / batch_size_;
}

std::vector<std::int64_t> PairSampler::permutation(int stream, std::int64_t epoch, std::int64_t n) const {
  return seeded_permutation(
      n, derive_seed(seed_, {seed_tag::kPairs, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(stream)}));
}

ImagePair PairSampler::pairs(std::int64_t epoch, std::int64_t index) const {
  const auto bpe = batches_per_epoch();
  if (index < 0 || index >= bpe) throw ConfigError("pair batch index out of range");
  const auto n1 = user1_->size();
  const auto p1 = permutation(1, epoch, n1);
  const auto begin = index * batch_size_;
  const auto limit = mode_ == PairingMode::cross_dataset ? std::min(n1, user2_->size()) : n1;
  const auto count = std::min(batch_size_, limit - begin);
  std::vector<std::int64_t> first(p1.begin() + begin, p1.begin() + begin + count);

  std::vector<std::int64_t> second;
  second.reserve(static_cast<std::size_t>(count));
  if (mode_ == PairingMode::cross_dataset) {
    const auto p2 = permutation(2, epoch, user2_->size());
    second.assign(p2.begin() + begin, p2.begin() + begin + count);
  } else {
    const auto p2 = permutation(2, epoch, n1);
    std::unordered_set<std::int64_t> taken(first.begin(), first.end());
    for (std::int64_t k = 0; static_cast<std::int64_t>(second.size()) < count; ++k) {
      const auto candidate = p2[static_cast<std::size_t>((begin + k) % n1)];
      if (taken.insert(candidate).second) second.push_back(candidate);
    }
  }
  return {user1_->gather(first), user2_->gather(second)};
}

ImagePair PairSampler::pairs(std::int64_t step) const {
  const auto bpe = batches_per_epoch();
  return pairs(step / bpe, step % bpe);
}

ImagePair make_pairs(const PairingPolicy& policy, std::int64_t batch_size, std::uint64_t seed) {
  const auto first = load_dataset(policy.user1, Split::train);
  if (policy.mode == PairingMode::same_dataset_disjoint) {
    return PairSampler(first, batch_size, seed).pairs(0);
  }
  if (!policy.user2) throw ConfigError("cross-dataset pairing needs a second dataset");
  const auto second = load_dataset(*policy.user2, Split::train);
  return PairSampler(first, second, batch_size, seed).pairs(0);
}

void write_cifar_binary(const fs::path& file, const ImageBatch& batch, std::span<const std::uint8_t> labels) {
  const auto& data = batch.data;
  if (data.dim() != 4 || data.size(1) != 3 || data.size(2) != kCifarSide || data.size(3) != kCifarSide) {
    throw ConfigError("CIFAR binary records are 3 x 32 x 32");
  }
  const auto quantized = data.detach().to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8)
                             .contiguous();
  if (!file.parent_path().empty()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IngestError("cannot write dataset file: " + file.string());
  const auto* px = quantized.data_ptr<std::uint8_t>();
  const std::int64_t per_image = 3 * kCifarSide * kCifarSide;
  for (std::int64_t i = 0; i < quantized.size(0); ++i) {
    const std::uint8_t label = labels.empty() ? 0 : labels[static_cast<std::size_t>(i) % labels.size()];
    out.put(static_cast<char>(label));
    out.write(reinterpret_cast<const char*>(px + i * per_image), per_image);
  }
  if (!out) throw IngestError("write failure: " + file.string());
}

namespace {

// One smooth scene: a two-color gradient with a handful of soft shapes and
// faint texture, rendered at 4x and area-downsampled.
cv::Mat synthesize_scene(std::mt19937_64& gen) {
  constexpr int kScale = 4;
  constexpr int side = kCifarSide * kScale;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto color = [&] { return cv::Vec3d(255 * unit(gen), 255 * unit(gen), 255 * unit(gen)); };

  cv::Mat canvas(side, side, CV_64FC3);
  const auto c0 = color(), c1 = color();
  const double angle = 2 * M_PI * unit(gen);
  const double dx = std::cos(angle), dy = std::sin(angle);
  for (int y = 0; y < side; ++y) {
    auto* row = canvas.ptr<cv::Vec3d>(y);
    for (int x = 0; x < side; ++x) {
      const double t = 0.5 + ((x - side / 2.0) * dx + (y - side / 2.0) * dy) / side;
      row[x] = c0 * (1 - t) + c1 * t;
    }
  }
  std::uniform_int_distribution<int> shape_count(2, 5);
  const int shapes = shape_count(gen);
  for (int s = 0; s < shapes; ++s) {
    const auto c = color();
    const cv::Point center(static_cast<int>(side * unit(gen)), static_cast<int>(side * unit(gen)));
    const int a = static_cast<int>(side * (0.08 + 0.3 * unit(gen)));
    const int b = static_cast<int>(side * (0.08 + 0.3 * unit(gen)));
    if (unit(gen) < 0.6) {
      cv::ellipse(canvas, center, cv::Size(a, b), 180 * unit(gen), 0, 360, cv::Scalar(c[0], c[1], c[2]), cv::FILLED,
                  cv::LINE_AA);
    } else {
      const cv::RotatedRect rect(center, cv::Size2f(static_cast<float>(2 * a), static_cast<float>(2 * b)),
                                 static_cast<float>(180 * unit(gen)));
      cv::Point2f corners[4];
      rect.points(corners);
      std::vector<cv::Point> poly(corners, corners + 4);
      cv::fillConvexPoly(canvas, poly, cv::Scalar(c[0], c[1], c[2]), cv::LINE_AA);
    }
  }
  cv::GaussianBlur(canvas, canvas, cv::Size(0, 0), 1.5 * kScale / 2);
  cv::Mat small;
  cv::resize(canvas, small, cv::Size(kCifarSide, kCifarSide), 0, 0, cv::INTER_AREA);
  std::normal_distribution<double> grain(0.0, 4.0);
  for (int y = 0; y < kCifarSide; ++y) {
    auto* row = small.ptr<cv::Vec3d>(y);
    for (int x = 0; x < kCifarSide; ++x) {
      for (int ch = 0; ch < 3; ++ch) row[x][ch] += grain(gen);
    }
  }
  cv::Mat out;
  small.convertTo(out, CV_8UC3);
  return out;
}

void write_synthetic_file(const fs::path& file, std::int64_t count, std::mt19937_64& gen) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IngestError("cannot write dataset file: " + file.string());
  std::vector<char> record(static_cast<std::size_t>(kCifarRecord));
  for (std::int64_t i = 0; i < count; ++i) {
    const cv::Mat img = synthesize_scene(gen);
    record[0] = 0;
    for (int y = 0; y < kCifarSide; ++y) {
      const auto* row = img.ptr<cv::Vec3b>(y);
      for (int x = 0; x < kCifarSide; ++x) {
        for (int ch = 0; ch < 3; ++ch) {
          record[static_cast<std::size_t>(1 + (ch * kCifarSide + y) * kCifarSide + x)] = static_cast<char>(row[x][ch]);
        }
      }
    }
    out.write(record.data(), kCifarRecord);
  }
  if (!out) throw IngestError("write failure: " + file.string());
}

}  // namespace

void synthesize_cifar_corpus(const fs::path& dir, std::int64_t train_count, std::int64_t test_count,
                             std::uint64_t seed) {
  if (train_count < 1 || test_count < 1) throw ConfigError("synthetic corpus needs non-empty splits");
  fs::create_directories(dir);
  std::mt19937_64 gen(seed);
  constexpr std::int64_t kPerFile = 10000;
  int file_index = 1;
  for (std::int64_t written = 0; written < train_count; written += kPerFile, ++file_index) {
    write_synthetic_file(dir / ("data_batch_" + std::to_string(file_index) + ".bin"),
                         std::min(kPerFile, train_count - written), gen);
  }
  write_synthetic_file(dir / "test_batch.bin", test_count, gen);
}

std::string to_string(ResizePolicy policy) {
  switch (policy) {
    case ResizePolicy::none:
      return "none";
    case ResizePolicy::center_crop:
      return "center-crop";
    case ResizePolicy::resize:
      return "resize";
  }
  return "none";
}

std::string to_string(DatasetFormat format) {
  switch (format) {
    case DatasetFormat::cifar_binary:
      return "cifar-binary";
    case DatasetFormat::stl10_binary:
      return "stl10-binary";
    case DatasetFormat::image_directory:
      return "image-directory";
  }
  return "cifar-binary";
}

ResizePolicy parse_resize_policy(const std::string& text) {
  if (text == "none") return ResizePolicy::none;
  if (text == "center-crop") return ResizePolicy::center_crop;
  if (text == "resize") return ResizePolicy::resize;
  throw ConfigError("unknown resize policy: " + text);
}

DatasetFormat parse_dataset_format(const std::string& text) {
  if (text == "cifar-binary") return DatasetFormat::cifar_binary;
  if (text == "stl10-binary") return DatasetFormat::stl10_binary;
  if (text == "image-directory") return DatasetFormat::image_directory;
  throw ConfigError("unknown dataset format: " + text);
}

}  // namespace dbcsem
