#include "aip/errors.hpp"
#include "aip/metrics.hpp"
#include "aip/model_zoo.hpp"
#include "aip/surgery.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace aip;
using namespace aip::testing;

namespace {

NetworkDescriptor vgg_small_w8() {
  ScaleConfig s;
  s.input = {3, 16, 16};
  s.width = 8;
  return build_descriptor(Arch::VggSmall, s);
}

KeepMask random_mask(const NetworkDescriptor& d, std::mt19937_64& rng) {
  KeepMask mask;
  std::bernoulli_distribution keep(0.6);
  std::uniform_int_distribution<int> pick(0, 1 << 20);
  for (int l : d.prunable) {
    std::vector<bool> m(d.layers[l].out_channels);
    for (std::size_t c = 0; c < m.size(); ++c) m[c] = keep(rng);
    m[pick(rng) % m.size()] = true;
    mask[l] = m;
  }
  return mask;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("aip_metrics_" + name);
}

}  // namespace

TEST(Metrics, ConvAndLinearArithmetic) {
  EXPECT_EQ(layer_params(conv(-1, 3, 4)), 112u);
  EXPECT_EQ(layer_params(bn(0, 4)), 8u);
  EXPECT_EQ(layer_params(linear(0, 4, 10)), 50u);
  EXPECT_EQ(layer_params(relu(0, 4)), 0u);

  const auto d = make_descriptor({1, 2, 2}, 2,
                                 {conv(-1, 1, 1, 1, 1, 0), pool(0, 1, PoolType::GlobalAverage), linear(1, 1, 2)});
  const auto f = count_flops(d);
  // conv: 4 output positions x 1 MAC; linear: 2 MACs
  EXPECT_EQ(f.macs, 4u + 2u);
  EXPECT_EQ(f.flops, 8u + 4u);
  // one 1x1 conv plus its bias, then the classifier
  EXPECT_EQ(count_params(d), 2u + 4u);
}

TEST(Metrics, CompareDrops) {
  MetricsReport base = measure(vgg_small_w8(), "base");
  EXPECT_EQ(compare(base, base).params_pct, 0.0);
  EXPECT_EQ(compare(base, base).flops_pct, 0.0);
  MetricsReport half = base;
  half.params = base.params / 2;
  half.flops.macs = base.flops.macs / 2;
  half.flops.flops = base.flops.flops / 2;
  EXPECT_DOUBLE_EQ(compare(base, half).params_pct, 50.0);
  EXPECT_EQ(format_pct(compare(base, half).params_pct), "50.00");
  MetricsReport zero;
  EXPECT_THROW(compare(zero, base), std::invalid_argument);
}

TEST(Metrics, HandPrunedVggSmall) {
  const auto d = vgg_small_w8();
  ASSERT_EQ(d.prunable.size(), 8u);
  KeepMask mask;
  mask[d.prunable.front()] = {true, false, true, true, false, true, true, true};  // conv1 keeps 6 of 8
  std::vector<bool> last(64, true);
  for (int c = 0; c < 10; ++c) last[c * 6] = false;  // conv8 keeps 54 of 64
  mask[d.prunable.back()] = last;
  const auto pruned = apply(d, plan(d, mask));

  auto conv_p = [](long k, long in, long out) { return k * k * in * out + out; };
  const long base_params = conv_p(3, 3, 8) + conv_p(3, 8, 8) + conv_p(3, 8, 16) + conv_p(3, 16, 16) +
                           conv_p(3, 16, 32) + conv_p(3, 32, 32) + conv_p(3, 32, 64) + conv_p(3, 64, 64) +
                           2 * (8 + 8 + 16 + 16 + 32 + 32 + 64 + 64) + 64 * 10 + 10;
  const long removed = (conv_p(3, 3, 8) - conv_p(3, 3, 6)) + 2 * 2 + (conv_p(3, 8, 8) - conv_p(3, 6, 8)) +
                       (conv_p(3, 64, 64) - conv_p(3, 64, 54)) + 2 * 10 + 10 * 10;
  EXPECT_EQ(static_cast<long>(count_params(d)), base_params);
  EXPECT_EQ(static_cast<long>(count_params(pruned)), base_params - removed);

  const long base_macs = 9L * (3 * 8 + 8 * 8) * 256 + 9L * (8 * 16 + 16 * 16) * 64 + 9L * (16 * 32 + 32 * 32) * 16 +
                         9L * (32 * 64 + 64 * 64) * 4 + 64 * 10;
  const long pruned_macs = 9L * (3 * 6 + 6 * 8) * 256 + 9L * (8 * 16 + 16 * 16) * 64 +
                           9L * (16 * 32 + 32 * 32) * 16 + 9L * (32 * 64 + 64 * 54) * 4 + 54 * 10;
  EXPECT_EQ(static_cast<long>(count_flops(d).macs), base_macs);

  MetricsReport base = measure(d, "base");
  MetricsReport after = measure(pruned, "pruned");
  const Drops drops = compare(base, after);
  EXPECT_NEAR(drops.params_pct, 100.0 * removed / base_params, 0.01);
  EXPECT_NEAR(drops.macs_pct, 100.0 * (base_macs - pruned_macs) / base_macs, 0.01);
  EXPECT_NEAR(drops.flops_pct, drops.macs_pct, 1e-12);
}

TEST(Metrics, RemovedTallyAndStrictDecrease) {
  std::mt19937_64 rng(3);
  ScaleConfig s;
  s.input = {3, 16, 16};
  s.width = 8;
  for (Arch a : {Arch::VggSmall, Arch::ResnetBasic, Arch::InceptionSmall}) {
    const auto d = build_descriptor(a, s);
    for (int trial = 0; trial < 20; ++trial) {
      const KeepMask mask = random_mask(d, rng);
      const PrunePlan p = plan(d, mask);
      const auto pruned = apply(d, p);
      EXPECT_EQ(count_params(pruned) + removed_parameters(d, p), count_params(d));
      bool trivial = true;
      for (const auto& [l, m] : mask)
        for (bool b : m) trivial = trivial && b;
      if (!trivial) {
        EXPECT_LT(count_params(pruned), count_params(d));
        EXPECT_LT(count_flops(pruned).flops, count_flops(d).flops);
      }
    }
  }
}

TEST(Metrics, PerLayerSurvivalAndReport) {
  const auto d = vgg_small_w8();
  KeepMask mask;
  mask[d.prunable[1]] = {true, true, false, false, true, true, true, true};
  const auto pruned = apply(d, plan(d, mask));
  const auto surv = survival(d, pruned);
  ASSERT_EQ(surv.size(), d.prunable.size());
  EXPECT_EQ(surv[1].original, 8);
  EXPECT_EQ(surv[1].kept, 6);
  EXPECT_EQ(surv[0].kept, 8);

  MetricsReport base = measure(d, "teacher");
  base.accuracy = 0.9;
  MetricsReport after = measure(pruned, "k=0.3");
  after.accuracy = 0.895;
  attach_drops(base, after);
  const std::string text = serialize(after);
  EXPECT_NE(text.find("params_drop_pct: " + format_pct(after.params_drop_pct)), std::string::npos);
  EXPECT_NE(text.find("accuracy: 89.50"), std::string::npos);
  const std::string table = comparison_table(base, {after});
  EXPECT_NE(table.find("Parameters.drop/%"), std::string::npos);
  EXPECT_NE(table.find("FLOPs.drop/%"), std::string::npos);
  EXPECT_NE(table.find("| 0.50 |"), std::string::npos);

  MetricsReport same = measure(d, "unpruned");
  attach_drops(base, same);
  EXPECT_EQ(format_pct(same.params_drop_pct), "0.00");
  EXPECT_EQ(format_pct(same.flops_drop_pct), "0.00");
}

TEST(Metrics, ScoreCsvRoundTrip) {
  std::map<int, Scores> scores;
  scores[2].values = Eigen::VectorXd{{0.25, 1.0 / 3.0, 1.0}};
  scores[7].values = Eigen::VectorXd{{1.0, 0.1, 0.7}};
  const auto path = temp_path("scores.csv");
  export_scores(scores, path);
  std::ifstream in(path);
  std::string line;
  int rows = 0;
  std::getline(in, line);
  EXPECT_EQ(line, "layer,channel,score");
  while (std::getline(in, line)) {
    ++rows;
    const double v = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(rows, 6);
  const auto back = import_scores(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.at(2), scores[2].values);
  EXPECT_EQ(back.at(7), scores[7].values);
  std::filesystem::remove(path);
  EXPECT_THROW(import_scores(path), MissingArtifact);
}
