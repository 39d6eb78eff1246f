#include "aip/errors.hpp"
#include "aip/metrics.hpp"
#include "aip/model_zoo.hpp"
#include "aip/surgery.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace aip;
using namespace aip::testing;

namespace {

int layer_index(const NetworkDescriptor& d, const std::string& name) {
  for (int i = 0; i < d.size(); ++i)
    if (d.layers[i].name == name) return i;
  throw std::out_of_range(name);
}

NetworkDescriptor two_conv_chain() {
  return make_descriptor({3, 6, 6}, 2,
                         {conv(-1, 3, 4), bn(0, 4), relu(1, 4), conv(2, 4, 8), bn(3, 8), relu(4, 8),
                          pool(5, 8, PoolType::GlobalAverage), linear(6, 8, 2)},
                         {0, 3}, {2, 2, 2});
}

ScaleConfig small(int width = 8) {
  ScaleConfig s;
  s.input = {3, 16, 16};
  s.width = width;
  return s;
}

}  // namespace

TEST(Surgery, ChainSlicesProducerAndConsumer) {
  const auto d = two_conv_chain();
  KeepMask mask;
  mask[0] = {true, false, true, false};
  const PrunePlan p = plan(d, mask);
  const auto pd = apply(d, p);
  EXPECT_EQ(pd.layers[0].out_channels, 2);
  EXPECT_EQ(pd.layers[1].out_channels, 2);
  EXPECT_EQ(pd.layers[3].in_channels, 2);
  EXPECT_EQ(pd.layers[3].out_channels, 8);

  Network<double> net(d, 4);
  std::mt19937_64 rng(1);
  for (auto& b : net.params()[1].buffers) b = random_matrix<double>(4, 1, rng).cwiseAbs();
  const Network<double> pruned = apply(net, p);
  const auto& w0 = net.params()[0].values[0];
  const auto& pw0 = pruned.params()[0].values[0];
  EXPECT_EQ(pw0.row(0), w0.row(0));
  EXPECT_EQ(pw0.row(1), w0.row(2));
  EXPECT_EQ(pruned.params()[0].values[1](1, 0), net.params()[0].values[1](2, 0));
  EXPECT_EQ(pruned.params()[1].buffers[0](1, 0), net.params()[1].buffers[0](2, 0));
  EXPECT_EQ(pruned.params()[1].buffers[1](1, 0), net.params()[1].buffers[1](2, 0));
  // consumer input slices: column (ky*3+kx)*4 + ci keeps ci in {0, 2}
  const auto& w3 = net.params()[3].values[0];
  const auto& pw3 = pruned.params()[3].values[0];
  for (int kk = 0; kk < 9; ++kk) {
    EXPECT_EQ(pw3.col(kk * 2 + 0), w3.col(kk * 4 + 0));
    EXPECT_EQ(pw3.col(kk * 2 + 1), w3.col(kk * 4 + 2));
  }
  EXPECT_EQ(pruned.params()[3].values[1], net.params()[3].values[1]);
}

TEST(Surgery, ResidualSecondConvOutputUntouched) {
  ScaleConfig s = small(16);
  const auto d = build_descriptor(Arch::ResnetBasic, s);
  const int c1 = layer_index(d, "s1b2_conv1");
  const int c2 = layer_index(d, "s1b2_conv2");
  KeepMask mask;
  mask[c1] = std::vector<bool>(16, false);
  for (int c = 0; c < 10; ++c) mask[c1][c] = true;
  const auto pd = apply(d, plan(d, mask));
  EXPECT_EQ(pd.layers[c1].out_channels, 10);
  EXPECT_EQ(pd.layers[c2].in_channels, 10);
  EXPECT_EQ(pd.layers[c2].out_channels, 16);
  const int add = layer_index(d, "s1b2_add");
  EXPECT_EQ(pd.layers[add], d.layers[add]);
  EXPECT_FALSE(validate(pd, pd.input).has_value());
}

TEST(Surgery, InceptionMatchesHandPropagation) {
  const auto d = build_descriptor(Arch::InceptionSmall, small(8));
  const int b2r = layer_index(d, "inc1_b2_reduce"), b2c = layer_index(d, "inc1_b2_conv");
  const int b3r = layer_index(d, "inc1_b3_reduce"), b31 = layer_index(d, "inc1_b3_conv1");
  const int b32 = layer_index(d, "inc1_b3_conv2"), cat = layer_index(d, "inc1_concat");
  // Half of each internal conv at k=0.5-like scores: every other channel.
  KeepMask mask;
  for (int l : {b2r, b3r, b31}) {
    std::vector<bool> m(d.layers[l].out_channels);
    for (std::size_t c = 0; c < m.size(); ++c) m[c] = c % 2 == 0;
    mask[l] = m;
  }
  const auto pd = apply(d, plan(d, mask));
  // base 8: b2_reduce 6 -> 3, b3_reduce 8 -> 4, b3_conv1 12 -> 6
  EXPECT_EQ(pd.layers[b2r].out_channels, 3);
  EXPECT_EQ(pd.layers[b2c].in_channels, 3);
  EXPECT_EQ(pd.layers[b2c].out_channels, 8);
  EXPECT_EQ(pd.layers[b3r].out_channels, 4);
  EXPECT_EQ(pd.layers[b31].in_channels, 4);
  EXPECT_EQ(pd.layers[b31].out_channels, 6);
  EXPECT_EQ(pd.layers[b32].in_channels, 6);
  EXPECT_EQ(pd.layers[b32].out_channels, 12);
  EXPECT_EQ(pd.layers[cat], d.layers[cat]);
  EXPECT_EQ(pd.layers[cat].inputs.size(), 4u);
  EXPECT_EQ(pd.layers[layer_index(d, "inc1_b1")], d.layers[layer_index(d, "inc1_b1")]);
  EXPECT_EQ(pd.layers[layer_index(d, "inc1_b4_conv")], d.layers[layer_index(d, "inc1_b4_conv")]);
}

TEST(Surgery, KeepAllIsIdentity) {
  Network<float> net = build<float>(Arch::ResnetBasic, small(), 3);
  KeepMask mask;
  for (int l : net.descriptor().prunable) mask[l] = std::vector<bool>(net.descriptor().layers[l].out_channels, true);
  const Network<float> same = apply(net, plan(net.descriptor(), mask));
  EXPECT_EQ(same.descriptor(), net.descriptor());
  EXPECT_EQ(parameter_hash(same), parameter_hash(net));
}

TEST(Surgery, RandomMasksStayValid) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution keep(0.5);
  for (Arch a : {Arch::VggSmall, Arch::ResnetBasic, Arch::InceptionSmall}) {
    Network<float> net = build<float>(a, small(), 1);
    const auto& d = net.descriptor();
    for (int trial = 0; trial < 10; ++trial) {
      KeepMask mask;
      for (int l : d.prunable) {
        std::vector<bool> m(d.layers[l].out_channels);
        for (std::size_t c = 0; c < m.size(); ++c) m[c] = keep(rng);
        m[trial % m.size()] = true;
        mask[l] = m;
      }
      Network<float> pruned = apply(net, plan(d, mask));
      EXPECT_FALSE(validate(pruned.descriptor(), pruned.descriptor().input).has_value());
      EXPECT_EQ(pruned.parameter_count(), count_params(pruned.descriptor()));
      const auto& logits = pruned.forward(random_input<float>(d.input, 2, rng), Mode::Eval);
      EXPECT_EQ(logits.rows(), 10);
    }
  }
}

TEST(Surgery, ZeroContributionChannelsPreserveFunction) {
  std::mt19937_64 rng(8);
  Network<double> net = build<double>(Arch::VggSmall, small(), 2);
  const auto& d = net.descriptor();
  // Non-trivial running statistics so eval mode is not an identity transform.
  for (auto& p : net.params())
    for (auto& b : p.buffers) b = (random_matrix<double>(b.rows(), 1, rng, 0.5).array().abs() + 0.5).matrix();
  const int victim_conv = d.prunable[2];
  const int victim_bn = d.consumers(victim_conv).front();
  const int next_conv = d.prunable[3];
  std::vector<bool> keep(d.layers[victim_conv].out_channels, true);
  for (int c : {1, 4, 5}) {
    keep[c] = false;
    net.params()[victim_bn].values[0](c, 0) = 0.0;
    const int cin = d.layers[next_conv].in_channels;
    for (int kk = 0; kk < 9; ++kk) net.params()[next_conv].values[0].col(kk * cin + c).setZero();
  }
  Network<double> pruned = apply(net, plan(d, {{victim_conv, keep}}));
  const FeatureMap<double> x = random_input<double>(d.input, 8, rng);
  const Matrix<double> before = net.forward(x, Mode::Eval);
  const Matrix<double> after = pruned.forward(x, Mode::Eval);
  EXPECT_LT((before - after).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Surgery, RejectsInvalidMasks) {
  const auto d = two_conv_chain();
  EXPECT_THROW(plan(d, {{1, {true, true, true, true}}}), ShapeMismatch);
  EXPECT_THROW(plan(d, {{0, {true, true}}}), ShapeMismatch);
  EXPECT_THROW(plan(d, {{0, {false, false, false, false}}}), ShapeMismatch);

  // A prunable conv feeding an add-junction cannot shrink.
  auto junction_net = make_descriptor({2, 4, 4}, 2,
                                      {conv(-1, 2, 2), conv(-1, 2, 2), junction(LayerKind::Add, {0, 1}, 2),
                                       pool(2, 2, PoolType::GlobalAverage), linear(3, 2, 2)},
                                      {0});
  EXPECT_THROW(plan(junction_net, {{0, {true, false}}}), ShapeMismatch);
  junction_net.attention_taps = {0, 3, 4};
  const auto issue = validate(junction_net, junction_net.input);
  ASSERT_TRUE(issue.has_value());
  EXPECT_EQ(issue->layer, 0);
}

TEST(Surgery, ValidateReportsCorruptedLayer) {
  auto d = build_descriptor(Arch::VggSmall, small());
  EXPECT_FALSE(validate(d, d.input).has_value());
  const int target = d.prunable[3];
  d.layers[target].in_channels += 1;
  const auto issue = validate(d, d.input);
  ASSERT_TRUE(issue.has_value());
  EXPECT_EQ(issue->layer, target);
}

TEST(Surgery, PlanDocumentRoundTrip) {
  const auto d = build_descriptor(Arch::VggSmall, small());
  KeepMask mask;
  mask[d.prunable[0]] = {true, false, true, true, false, true, true, true};
  mask[d.prunable[5]] = std::vector<bool>(d.layers[d.prunable[5]].out_channels, true);
  const PrunePlan p = plan(d, mask);
  const std::string text = serialize(p, d);
  EXPECT_EQ(parse_plan_sources(text), p.sources);
  EXPECT_NE(text.find("prune " + std::to_string(d.prunable[0]) + " conv1 8 6 keep=0,2,3,5,6,7"), std::string::npos);
}
