#include <gtest/gtest.h>

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <string>

#include "dbcsem/datahub.hpp"
#include "dbcsem/errors.hpp"
#include "../support/oracles.hpp"

using namespace dbcsem;
namespace fs = std::filesystem;

namespace {

class SyntheticCorpus : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new oracle::TempDir("datahub");
    synthesize_cifar_corpus(dir_->path(), 120, 40, 3);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static DatasetSpec spec() {
    DatasetSpec s;
    s.source_path = dir_->path();
    return s;
  }
  static oracle::TempDir* dir_;
};

oracle::TempDir* SyntheticCorpus::dir_ = nullptr;

template <typename Fn>
void expect_error_naming(Fn&& fn, const std::string& fragment) {
  try {
    fn();
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

void expect_distinct(const ImagePair& p) {
  std::set<std::int64_t> ids(p.s1.ids.begin(), p.s1.ids.end());
  ids.insert(p.s2.ids.begin(), p.s2.ids.end());
  EXPECT_EQ(ids.size(), p.s1.ids.size() + p.s2.ids.size());
}

}  // namespace

TEST_F(SyntheticCorpus, CountsShapeAndRange) {
  const auto train = load_dataset(spec(), Split::train);
  const auto test = load_dataset(spec(), Split::test);
  EXPECT_EQ(train.size(), 120);
  EXPECT_EQ(test.size(), 40);
  const auto all = train.all();
  EXPECT_EQ(all.data.sizes(), (std::vector<std::int64_t>{120, 3, 32, 32}));
  EXPECT_EQ(all.data.scalar_type(), torch::kFloat32);
  EXPECT_GE(all.data.min().item<double>(), 0.0);
  EXPECT_LE(all.data.max().item<double>(), 1.0);
  EXPECT_GT(all.data.std().item<double>(), 0.01);
}

TEST_F(SyntheticCorpus, TrainAndTestIdsAreDisjoint) {
  const auto train = load_dataset(spec(), Split::train);
  const auto test = load_dataset(spec(), Split::test);
  std::set<std::int64_t> ids(train.ids().begin(), train.ids().end());
  for (auto id : test.ids()) EXPECT_FALSE(ids.count(id)) << id;
}

TEST_F(SyntheticCorpus, CountLimitsAndOverflow) {
  auto s = spec();
  s.train_count = 50;
  EXPECT_EQ(load_dataset(s, Split::train).size(), 50);
  s.train_count = 500;
  EXPECT_THROW(load_dataset(s, Split::train), ConfigError);
  EXPECT_EQ(load_dataset(spec(), Split::train).head(10).size(), 10);
}

TEST_F(SyntheticCorpus, CifarWriterRoundTrip) {
  torch::manual_seed(1);
  ImageBatch batch;
  batch.data = torch::rand({5, 3, 32, 32});
  batch.ids = {0, 1, 2, 3, 4};
  oracle::TempDir dir("cifar-rt");
  write_cifar_binary(dir.path() / "data_batch_1.bin", batch);
  write_cifar_binary(dir.path() / "test_batch.bin", batch);
  DatasetSpec s;
  s.source_path = dir.path();
  const auto back = load_dataset(s, Split::train).all();
  EXPECT_LE((back.data - batch.data).abs().max().item<double>(), 1.0 / 255.0);
  EXPECT_THROW(write_cifar_binary(dir.path() / "x.bin", ImageBatch{torch::rand({1, 3, 16, 16}), {0}}), ConfigError);
}

TEST_F(SyntheticCorpus, DisjointPairsInEveryBatch) {
  const auto train = load_dataset(spec(), Split::train);
  const PairSampler sampler(train, 8, 7);
  EXPECT_EQ(sampler.mode(), PairingMode::same_dataset_disjoint);
  EXPECT_EQ(sampler.batches_per_epoch(), 15);
  for (std::int64_t epoch = 0; epoch < 3; ++epoch) {
    for (std::int64_t b = 0; b < sampler.batches_per_epoch(); ++b) {
      const auto p = sampler.pairs(epoch, b);
      ASSERT_EQ(p.s1.size(), 8);
      ASSERT_EQ(p.s2.size(), 8);
      expect_distinct(p);
    }
  }
  const auto first = sampler.pairs(0, 0);
  std::set<std::int64_t> ids(first.s1.ids.begin(), first.s1.ids.end());
  ids.insert(first.s2.ids.begin(), first.s2.ids.end());
  EXPECT_EQ(ids.size(), 16u);
}

TEST_F(SyntheticCorpus, PairsAreSeedDeterministic) {
  const auto train = load_dataset(spec(), Split::train);
  const PairSampler a(train, 8, 7), b(train, 8, 7), c(train, 8, 8);
  const auto pa = a.pairs(4), pb = b.pairs(4), pc = c.pairs(4);
  EXPECT_EQ(pa.s1.ids, pb.s1.ids);
  EXPECT_EQ(pa.s2.ids, pb.s2.ids);
  EXPECT_TRUE(torch::equal(pa.s1.data, pb.s1.data));
  EXPECT_NE(pa.s1.ids, pc.s1.ids);
  // global step view
  EXPECT_EQ(a.pairs(16).s1.ids, a.pairs(1, 1).s1.ids);
}

TEST_F(SyntheticCorpus, BatchTooLargeForDisjointPairs) {
  const auto test = load_dataset(spec(), Split::test);
  EXPECT_THROW(PairSampler(test, 21, 1), ConfigError);
  EXPECT_NO_THROW(PairSampler(test, 20, 1));
  EXPECT_THROW(PairSampler(test, 0, 1), ConfigError);
}

TEST_F(SyntheticCorpus, CrossDatasetPairsComeFromTheirOwnDataset) {
  const auto train = load_dataset(spec(), Split::train);
  const auto test = load_dataset(spec(), Split::test);
  const PairSampler sampler(train, test, 8, 2);
  EXPECT_EQ(sampler.mode(), PairingMode::cross_dataset);
  EXPECT_EQ(sampler.batches_per_epoch(), 5);
  const std::set<std::int64_t> train_ids(train.ids().begin(), train.ids().end());
  const std::set<std::int64_t> test_ids(test.ids().begin(), test.ids().end());
  for (std::int64_t b = 0; b < 5; ++b) {
    const auto p = sampler.pairs(0, b);
    for (auto id : p.s1.ids) EXPECT_TRUE(train_ids.count(id));
    for (auto id : p.s2.ids) EXPECT_TRUE(test_ids.count(id));
  }
  PairingPolicy policy;
  policy.mode = PairingMode::cross_dataset;
  policy.user1 = spec();
  EXPECT_THROW(make_pairs(policy, 4, 1), ConfigError);
  policy.user2 = spec();
  EXPECT_EQ(make_pairs(policy, 4, 1).s2.size(), 4);
}

TEST_F(SyntheticCorpus, BatchStreamCoversEpoch) {
  const auto test = load_dataset(spec(), Split::test);
  const BatchStream stream(test, 16, 3);
  ASSERT_EQ(stream.batches_per_epoch(), 3);
  std::multiset<std::int64_t> seen;
  for (std::int64_t b = 0; b < 3; ++b) {
    const auto batch = stream.batch(0, b);
    seen.insert(batch.ids.begin(), batch.ids.end());
  }
  EXPECT_EQ(stream.batch(0, 2).size(), 8);
  EXPECT_EQ(seen, std::multiset<std::int64_t>(test.ids().begin(), test.ids().end()));
  EXPECT_THROW(stream.batch(0, 3), ConfigError);
}

TEST(SeededPermutation, IsAPermutationAndDeterministic) {
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    auto p = seeded_permutation(257, seed);
    EXPECT_EQ(p, seeded_permutation(257, seed));
    std::sort(p.begin(), p.end());
    for (std::int64_t i = 0; i < 257; ++i) ASSERT_EQ(p[static_cast<std::size_t>(i)], i);
  }
  EXPECT_NE(seeded_permutation(50, 1), seeded_permutation(50, 2));
}

TEST(LoadDataset, MissingDirectoryNamesPath) {
  DatasetSpec s;
  s.source_path = "/nonexistent/dbcsem-data";
  expect_error_naming([&] { load_dataset(s, Split::train); }, "/nonexistent/dbcsem-data");
  s.format = DatasetFormat::image_directory;
  expect_error_naming([&] { load_dataset(s, Split::train); }, "/nonexistent/dbcsem-data");
}

TEST(LoadDataset, CorruptCifarFileNamesPath) {
  oracle::TempDir dir("corrupt");
  std::ofstream(dir.path() / "data_batch_1.bin", std::ios::binary) << std::string(1000, 'x');
  DatasetSpec s;
  s.source_path = dir.path();
  expect_error_naming([&] { load_dataset(s, Split::train); }, "data_batch_1.bin");
  expect_error_naming([&] { load_dataset(s, Split::test); }, "test_batch.bin");
}

TEST(LoadDataset, ResolutionMismatchNeedsPolicy) {
  oracle::TempDir dir("mismatch");
  synthesize_cifar_corpus(dir.path(), 4, 2, 1);
  DatasetSpec s;
  s.source_path = dir.path();
  s.height = s.width = 16;
  EXPECT_THROW(load_dataset(s, Split::train), ConfigError);
  s.policy = ResizePolicy::center_crop;
  EXPECT_EQ(load_dataset(s, Split::train).all().data.sizes(), (std::vector<std::int64_t>{4, 3, 16, 16}));
}

TEST(LoadDataset, Stl10ResizedTo32) {
  oracle::TempDir dir("stl");
  const int side = 96;
  std::vector<std::uint8_t> record(3 * side * side);
  // channel 0 grows with the column index x; storage is column-major
  for (int ch = 0; ch < 3; ++ch) {
    for (int x = 0; x < side; ++x) {
      for (int y = 0; y < side; ++y) record[static_cast<std::size_t>((ch * side + x) * side + y)] =
          ch == 0 ? static_cast<std::uint8_t>(x * 2) : 0;
    }
  }
  for (const char* name : {"train_X.bin", "test_X.bin"}) {
    std::ofstream out(dir.path() / name, std::ios::binary);
    for (int i = 0; i < 3; ++i) out.write(reinterpret_cast<const char*>(record.data()), static_cast<std::streamsize>(record.size()));
  }
  DatasetSpec s;
  s.name = "stl10";
  s.source_path = dir.path();
  s.format = DatasetFormat::stl10_binary;
  EXPECT_THROW(load_dataset(s, Split::train), ConfigError);
  s.policy = ResizePolicy::resize;
  const auto train = load_dataset(s, Split::train);
  const auto img = train.all().data;
  EXPECT_EQ(img.sizes(), (std::vector<std::int64_t>{3, 3, 32, 32}));
  // horizontal ramp: left column darker than right column, rows identical
  EXPECT_LT(img[0][0][5][0].item<double>(), img[0][0][5][31].item<double>());
  EXPECT_NEAR(img[0][0][0][10].item<double>(), img[0][0][31][10].item<double>(), 1e-6);
  const auto test = load_dataset(s, Split::test);
  EXPECT_EQ(test.id(0), 3);
}

TEST(LoadDataset, ImageDirectoryWithCenterCrop) {
  oracle::TempDir dir("imgdir");
  fs::create_directories(dir.path() / "train");
  fs::create_directories(dir.path() / "test");
  for (int i = 0; i < 3; ++i) {
    cv::Mat img(40, 48, CV_8UC3, cv::Scalar(10 * i, 20, 30));
    img.at<cv::Vec3b>(20, 24) = cv::Vec3b(255, 255, 255);
    cv::imwrite((dir.path() / "train" / ("img" + std::to_string(i) + ".png")).string(), img);
    cv::imwrite((dir.path() / "test" / ("img" + std::to_string(i) + ".png")).string(), img);
  }
  DatasetSpec s;
  s.name = "folder";
  s.source_path = dir.path();
  s.format = DatasetFormat::image_directory;
  EXPECT_THROW(load_dataset(s, Split::train), ConfigError);
  s.policy = ResizePolicy::center_crop;
  const auto train = load_dataset(s, Split::train);
  ASSERT_EQ(train.size(), 3);
  const auto data = train.all().data;
  // the bright centre pixel lands at (16, 16) after cropping 40x48 to 32x32
  EXPECT_NEAR(data[0][0][16][16].item<double>(), 1.0, 1e-6);
  // BGR on disk, RGB in memory: blue 10*i sits in channel 2
  EXPECT_NEAR(data[2][2][0][0].item<double>(), 20.0 / 255.0, 1e-6);
  EXPECT_NEAR(data[2][0][0][0].item<double>(), 30.0 / 255.0, 1e-6);
  const auto test = load_dataset(s, Split::test);
  EXPECT_EQ(test.id(0), 3);
  std::ofstream(dir.path() / "train" / "broken.png") << "not an image";
  expect_error_naming([&] { load_dataset(s, Split::train); }, "broken.png");
}

TEST(DatasetSpec, ValidationAndParsing) {
  DatasetSpec s;
  EXPECT_THROW(s.validate(), ConfigError);
  s.source_path = "/tmp";
  EXPECT_NO_THROW(s.validate());
  s.test_count = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_EQ(parse_resize_policy(to_string(ResizePolicy::center_crop)), ResizePolicy::center_crop);
  EXPECT_EQ(parse_dataset_format(to_string(DatasetFormat::stl10_binary)), DatasetFormat::stl10_binary);
  EXPECT_THROW(parse_resize_policy("stretch"), ConfigError);
}
