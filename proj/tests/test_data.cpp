#include "aip/data.hpp"
#include "aip/errors.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace aip;

namespace {

SyntheticSpec tiny() {
  SyntheticSpec s;
  s.train_samples = 200;
  s.test_samples = 50;
  return s;
}

}  // namespace

TEST(Data, SyntheticIsSeedDeterministic) {
  const Splits a = make_synthetic(tiny(), 3);
  const Splits b = make_synthetic(tiny(), 3);
  const Splits c = make_synthetic(tiny(), 4);
  EXPECT_EQ(a.train.pixels, b.train.pixels);
  EXPECT_EQ(a.test.labels, b.test.labels);
  EXPECT_NE(a.train.pixels, c.train.pixels);
  EXPECT_EQ(a.train.size(), 200);
  EXPECT_EQ(a.test.size(), 50);
  EXPECT_EQ(a.train.pixels.size(), 200u * 3 * 16 * 16);
  std::set<int> classes(a.train.labels.begin(), a.train.labels.end());
  EXPECT_EQ(classes.size(), 10u);
}

TEST(Data, NormalisationStatistics) {
  const Splits s = make_synthetic(tiny(), 1);
  const Normalization n = channel_stats(s.train);
  ASSERT_EQ(n.mean.size(), 3u);
  const std::size_t plane = 16 * 16;
  double sum = 0, sq = 0;
  for (int i = 0; i < s.train.size(); ++i)
    for (std::size_t p = 0; p < plane; ++p) {
      const double v = s.train.image(i)[p];
      sum += v;
      sq += v * v;
    }
  const double count = static_cast<double>(plane) * s.train.size();
  const double mean = sum / count;
  EXPECT_NEAR(n.mean[0], mean, 1e-4);
  EXPECT_NEAR(n.stddev[0], std::sqrt(sq / count - mean * mean), 1e-3);
}

TEST(Data, LoaderCoversEpochDeterministically) {
  const Splits s = make_synthetic(tiny(), 1);
  const Normalization n = channel_stats(s.train);
  BatchLoader a(s.train, n, 64, true, true, 9);
  BatchLoader b(s.train, n, 64, true, true, 9);
  EXPECT_EQ(a.batches_per_epoch(), 4);
  FeatureMap<float> xa, xb;
  std::vector<int> la, lb;
  for (int epoch = 0; epoch < 2; ++epoch) {
    a.start_epoch(epoch);
    b.start_epoch(epoch);
    int seen = 0;
    std::vector<int> label_counts(10, 0);
    while (a.next(xa, la)) {
      ASSERT_TRUE(b.next(xb, lb));
      EXPECT_EQ(xa.data, xb.data);
      EXPECT_EQ(la, lb);
      EXPECT_EQ(xa.shape(), (Shape{3, 16, 16}));
      seen += xa.batch;
      for (int l : la) ++label_counts[l];
    }
    EXPECT_FALSE(b.next(xb, lb));
    EXPECT_EQ(seen, 200);
    for (int c : label_counts) EXPECT_EQ(c, 20);
  }
}

TEST(Data, EvaluationLoaderIsPlainNormalisation) {
  const Splits s = make_synthetic(tiny(), 2);
  const Normalization n = channel_stats(s.train);
  BatchLoader loader(s.test, n, 7, false, false, 0);
  loader.start_epoch(0);
  FeatureMap<float> x;
  std::vector<int> labels;
  ASSERT_TRUE(loader.next(x, labels));
  EXPECT_EQ(labels[0], s.test.labels[0]);
  const float expected = (s.test.image(0)[5 * 16 + 3] - n.mean[0]) / n.stddev[0];
  EXPECT_FLOAT_EQ(x.at(0, 0, 5, 3), expected);
}

TEST(Data, CifarLoaderReadsBinaryBatches) {
  const auto dir = std::filesystem::temp_directory_path() / "aip_cifar_test";
  std::filesystem::create_directories(dir);
  auto write_batch = [&](const std::string& name, int records, int offset) {
    std::ofstream out(dir / name, std::ios::binary);
    for (int r = 0; r < records; ++r) {
      const unsigned char label = static_cast<unsigned char>((r + offset) % 10);
      out.put(static_cast<char>(label));
      for (int p = 0; p < 3072; ++p) out.put(static_cast<char>((p + r) % 256));
    }
  };
  for (int b = 1; b <= 5; ++b) write_batch("data_batch_" + std::to_string(b) + ".bin", 3, b);
  write_batch("test_batch.bin", 2, 0);
  const Splits s = load_cifar(dir, 10);
  EXPECT_EQ(s.train.size(), 15);
  EXPECT_EQ(s.test.size(), 2);
  EXPECT_EQ(s.train.shape, (Shape{3, 32, 32}));
  EXPECT_EQ(s.train.labels[0], 1);
  EXPECT_FLOAT_EQ(s.test.image(1)[0], 1.0f / 255.0f);
  std::filesystem::remove(dir / "test_batch.bin");
  EXPECT_THROW(load_cifar(dir, 10), MissingArtifact);
}
