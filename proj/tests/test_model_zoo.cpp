#include "aip/errors.hpp"
#include "aip/metrics.hpp"
#include "aip/model_zoo.hpp"
#include "aip/surgery.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace aip;
using namespace aip::testing;

namespace {

ScaleConfig small_scale(Shape input = {3, 16, 16}) {
  ScaleConfig s;
  s.input = input;
  s.width = 8;
  return s;
}

int layer_index(const NetworkDescriptor& d, const std::string& name) {
  for (int i = 0; i < d.size(); ++i)
    if (d.layers[i].name == name) return i;
  return -1;
}

}  // namespace

TEST(ModelZoo, EveryFamilyValidatesAndRuns) {
  std::mt19937_64 rng(1);
  for (Arch a : {Arch::VggSmall, Arch::ResnetBasic, Arch::InceptionSmall}) {
    const auto desc = build_descriptor(a, small_scale());
    EXPECT_FALSE(validate(desc, desc.input).has_value()) << to_string(a);
    Network<float> net(desc, 3);
    const Matrix<float>& logits = net.forward(random_input<float>(desc.input, 2, rng), Mode::Eval);
    EXPECT_EQ(logits.rows(), 10);
    EXPECT_EQ(logits.cols(), 2);
    EXPECT_EQ(net.parameter_count(), count_params(desc)) << to_string(a);
    for (int l : desc.prunable) EXPECT_EQ(desc.layers[l].kind, LayerKind::Conv);
  }
  const auto vgg16 = build_descriptor(Arch::Vgg16, ScaleConfig{});
  EXPECT_FALSE(validate(vgg16, vgg16.input).has_value());
}

TEST(ModelZoo, Vgg16MatchesReferenceCounts) {
  const auto d = build_descriptor(Arch::Vgg16, ScaleConfig{});
  EXPECT_NEAR(count_params(d) / 1e6, 14.73, 14.73 * 0.01);
  EXPECT_NEAR(count_flops(d).macs / 1e6, 314.59, 314.59 * 0.01);
  EXPECT_EQ(d.prunable.size(), 13u);
}

TEST(ModelZoo, AttentionTapsSitAtDistinctResolutions) {
  for (Arch a : {Arch::VggSmall, Arch::Vgg16, Arch::ResnetBasic, Arch::InceptionSmall}) {
    const ScaleConfig s = a == Arch::Vgg16 ? ScaleConfig{} : small_scale();
    const auto d = build_descriptor(a, s);
    const auto shapes = infer_shapes(d);
    std::set<int> heights;
    for (int t : d.attention_taps) heights.insert(shapes.at(t).height);
    EXPECT_EQ(heights.size(), 3u) << to_string(a);
  }
}

TEST(ModelZoo, ResnetPrunesFirstConvOfEachBlockOnly) {
  ScaleConfig s = small_scale();
  s.depth = 20;
  const auto d = build_descriptor(Arch::ResnetBasic, s);
  std::vector<int> expected;
  for (int stage = 1; stage <= 3; ++stage)
    for (int blk = 1; blk <= 3; ++blk) {
      const int idx = layer_index(d, "s" + std::to_string(stage) + "b" + std::to_string(blk) + "_conv1");
      ASSERT_GE(idx, 0);
      expected.push_back(idx);
    }
  EXPECT_EQ(d.prunable, expected);
  int convs = 0;
  for (const auto& l : d.layers) convs += l.kind == LayerKind::Conv;
  // stem + 2 per block + 2 projection shortcuts
  EXPECT_EQ(convs, 1 + 18 + 2);
}

TEST(ModelZoo, InceptionPrunesInternalBranchConvsOnly) {
  const auto d = build_descriptor(Arch::InceptionSmall, small_scale());
  std::vector<int> expected;
  for (const std::string m : {"inc1", "inc2"})
    for (const std::string b : {"_b2_reduce", "_b3_reduce", "_b3_conv1"}) expected.push_back(layer_index(d, m + b));
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(d.prunable, expected);
}

TEST(ModelZoo, RejectsBadArguments) {
  EXPECT_THROW(parse_arch("alexnet"), ConfigError);
  ScaleConfig one_class = small_scale();
  one_class.num_classes = 1;
  EXPECT_THROW(build_descriptor(Arch::VggSmall, one_class), ConfigError);
  EXPECT_THROW(build_descriptor(Arch::VggSmall, small_scale({3, 4, 4})), ShapeMismatch);
  EXPECT_THROW(build_descriptor(Arch::Vgg16, small_scale({3, 16, 16})), ShapeMismatch);
  ScaleConfig bad_depth = small_scale();
  bad_depth.depth = 21;
  EXPECT_THROW(build_descriptor(Arch::ResnetBasic, bad_depth), ConfigError);
}

TEST(ModelZoo, CloneIsIndependent) {
  Network<float> teacher = build<float>(Arch::VggSmall, small_scale(), 5);
  Network<float> student = clone_as_student(teacher);
  EXPECT_EQ(student.descriptor(), teacher.descriptor());
  EXPECT_EQ(parameter_hash(student), parameter_hash(teacher));
  EXPECT_EQ(student.descriptor().attention_taps, teacher.descriptor().attention_taps);
  student.params()[0].values[0](0, 0) += 1.0f;
  EXPECT_NE(parameter_hash(student), parameter_hash(teacher));

  KeepMask mask;
  const int first = student.descriptor().prunable.front();
  mask[first] = std::vector<bool>(student.descriptor().layers[first].out_channels, true);
  mask[first].back() = false;
  const Network<float> pruned = apply(student, plan(student.descriptor(), mask));
  EXPECT_LT(pruned.parameter_count(), teacher.parameter_count());
}

TEST(ModelZoo, SeededInitialisationIsDeterministic) {
  for (Arch a : {Arch::VggSmall, Arch::ResnetBasic, Arch::InceptionSmall}) {
    EXPECT_EQ(parameter_hash(build<float>(a, small_scale(), 9)), parameter_hash(build<float>(a, small_scale(), 9)));
  }
}
