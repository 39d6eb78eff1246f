#include "aip/model_zoo.hpp"

#include "aip/errors.hpp"

#include <algorithm>

namespace aip {

Arch parse_arch(const std::string& name) {
  if (name == "vgg_small") return Arch::VggSmall;
  if (name == "vgg16") return Arch::Vgg16;
  if (name == "resnet_basic") return Arch::ResnetBasic;
  if (name == "inception_small") return Arch::InceptionSmall;
  throw ConfigError("unknown architecture '" + name + "'");
}

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::VggSmall: return "vgg_small";
    case Arch::Vgg16: return "vgg16";
    case Arch::ResnetBasic: return "resnet_basic";
    case Arch::InceptionSmall: return "inception_small";
  }
  return "?";
}

namespace {

class Builder {
 public:
  Builder(std::string arch, const ScaleConfig& scale) {
    d_.arch = std::move(arch);
    d_.input = scale.input;
    d_.num_classes = scale.num_classes;
  }

  int conv(int src, int cin, int cout, int k, int stride, int pad, Connection conn, const std::string& name,
           bool prunable = false) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.name = name;
    l.inputs = {src};
    l.in_channels = cin;
    l.out_channels = cout;
    l.kernel = k;
    l.stride = stride;
    l.padding = pad;
    l.connection = conn;
    const int idx = push(std::move(l));
    if (prunable) d_.prunable.push_back(idx);
    return idx;
  }

  int channelwise(LayerKind kind, int src, int c, Connection conn, const std::string& name) {
    LayerSpec l;
    l.kind = kind;
    l.name = name;
    l.inputs = {src};
    l.in_channels = c;
    l.out_channels = c;
    l.connection = conn;
    return push(std::move(l));
  }

  /// conv -> batchnorm -> relu; returns the relu index.
  int conv_bn_relu(int src, int cin, int cout, int k, int stride, int pad, Connection conn,
                   const std::string& name, bool prunable) {
    const int c = conv(src, cin, cout, k, stride, pad, conn, name, prunable);
    const int b = channelwise(LayerKind::BatchNorm, c, cout, conn, name + "_bn");
    return channelwise(LayerKind::Activation, b, cout, conn, name + "_relu");
  }

  int pool(int src, int c, PoolType type, int k, int stride, int pad, Connection conn, const std::string& name) {
    LayerSpec l;
    l.kind = LayerKind::Pool;
    l.name = name;
    l.inputs = {src};
    l.in_channels = c;
    l.out_channels = c;
    l.kernel = k;
    l.stride = stride;
    l.padding = pad;
    l.pool = type;
    l.connection = conn;
    return push(std::move(l));
  }

  int junction(LayerKind kind, std::vector<int> srcs, int cin, int cout, const std::string& name) {
    LayerSpec l;
    l.kind = kind;
    l.name = name;
    l.inputs = std::move(srcs);
    l.in_channels = cin;
    l.out_channels = cout;
    return push(std::move(l));
  }

  int linear(int src, int cin, int cout) {
    LayerSpec l;
    l.kind = LayerKind::Linear;
    l.name = "classifier";
    l.inputs = {src};
    l.in_channels = cin;
    l.out_channels = cout;
    return push(std::move(l));
  }

  NetworkDescriptor finish(std::array<int, 3> taps) {
    d_.attention_taps = taps;
    std::sort(d_.prunable.begin(), d_.prunable.end());
    infer_shapes(d_);
    return std::move(d_);
  }

 private:
  int push(LayerSpec l) {
    d_.layers.push_back(std::move(l));
    return d_.size() - 1;
  }
  NetworkDescriptor d_;
};

void require_spatial(const ScaleConfig& s, int min_size, const std::string& arch) {
  if (s.input.height < min_size || s.input.width < min_size)
    throw ShapeMismatch(arch + " needs spatial input of at least " + std::to_string(min_size) + "x" +
                        std::to_string(min_size) + ", got " + to_string(s.input));
}

constexpr int kPool = -1;

/// Sequential conv stack; `kPool` entries insert 2x2 max pools. Taps are the
/// relu outputs closing the last three stages.
NetworkDescriptor build_vgg(const std::string& arch, const ScaleConfig& scale, const std::vector<int>& cfg,
                            bool trailing_pool) {
  Builder b(arch, scale);
  int src = -1;
  int channels = scale.input.channels;
  int conv_id = 0;
  std::vector<int> stage_ends;
  int spatial = std::min(scale.input.height, scale.input.width);
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    if (cfg[i] == kPool) {
      stage_ends.push_back(src);
      src = b.pool(src, channels, PoolType::Max, 2, 2, 0, Connection::Sequential,
                   "pool" + std::to_string(stage_ends.size()));
      spatial /= 2;
      continue;
    }
    ++conv_id;
    src = b.conv_bn_relu(src, channels, cfg[i], 3, 1, 1, Connection::Sequential, "conv" + std::to_string(conv_id),
                         true);
    channels = cfg[i];
  }
  if (!trailing_pool) stage_ends.push_back(src);
  if (spatial > 1 || !trailing_pool) {
    src = b.pool(src, channels, PoolType::GlobalAverage, 0, 1, 0, Connection::Sequential, "gap");
  }
  b.linear(src, channels, scale.num_classes);
  const auto n = stage_ends.size();
  return b.finish({stage_ends[n - 3], stage_ends[n - 2], stage_ends[n - 1]});
}

NetworkDescriptor build_resnet(const ScaleConfig& scale, int width) {
  if (scale.depth < 8 || (scale.depth - 2) % 6 != 0)
    throw ConfigError("resnet_basic depth must be 6n+2 with n >= 1, got " + std::to_string(scale.depth));
  require_spatial(scale, 4, "resnet_basic");
  const int blocks = (scale.depth - 2) / 6;
  Builder b("resnet_basic", scale);
  int src = b.conv_bn_relu(-1, scale.input.channels, width, 3, 1, 1, Connection::Sequential, "stem", false);
  int channels = width;
  std::array<int, 3> taps{};
  for (int stage = 0; stage < 3; ++stage) {
    const int out = width << stage;
    for (int blk = 0; blk < blocks; ++blk) {
      const std::string name = "s" + std::to_string(stage + 1) + "b" + std::to_string(blk + 1);
      const int stride = (stage > 0 && blk == 0) ? 2 : 1;
      const auto rb = Connection::ResidualBranch;
      const int r1 = b.conv_bn_relu(src, channels, out, 3, stride, 1, rb, name + "_conv1", true);
      const int c2 = b.conv(r1, out, out, 3, 1, 1, rb, name + "_conv2");
      const int bn2 = b.channelwise(LayerKind::BatchNorm, c2, out, rb, name + "_conv2_bn");
      int shortcut = src;
      if (stride != 1 || channels != out) {
        const int sc = b.conv(src, channels, out, 1, stride, 0, rb, name + "_shortcut");
        shortcut = b.channelwise(LayerKind::BatchNorm, sc, out, rb, name + "_shortcut_bn");
      }
      const int add = b.junction(LayerKind::Add, {bn2, shortcut}, out, out, name + "_add");
      src = b.channelwise(LayerKind::Activation, add, out, Connection::Sequential, name + "_relu");
      channels = out;
    }
    taps[stage] = src;
  }
  src = b.pool(src, channels, PoolType::GlobalAverage, 0, 1, 0, Connection::Sequential, "gap");
  b.linear(src, channels, scale.num_classes);
  return b.finish(taps);
}

/// Four-branch module: 1x1 | 1x1 -> 5x5 | 1x1 -> 3x3 -> 3x3 | avgpool -> 1x1.
int inception_module(Builder& b, int src, int cin, int base, const std::string& name, int* out_channels) {
  const auto ib = Connection::InceptionBranch;
  const int c1 = base;
  const int r2 = base * 3 / 4;
  const int c2 = base;
  const int r3 = base;
  const int m3 = base * 3 / 2;
  const int c3 = base * 3 / 2;
  const int c4 = base / 2;
  const int b1 = b.conv_bn_relu(src, cin, c1, 1, 1, 0, ib, name + "_b1", false);
  int b2 = b.conv_bn_relu(src, cin, r2, 1, 1, 0, ib, name + "_b2_reduce", true);
  b2 = b.conv_bn_relu(b2, r2, c2, 5, 1, 2, ib, name + "_b2_conv", false);
  int b3 = b.conv_bn_relu(src, cin, r3, 1, 1, 0, ib, name + "_b3_reduce", true);
  b3 = b.conv_bn_relu(b3, r3, m3, 3, 1, 1, ib, name + "_b3_conv1", true);
  b3 = b.conv_bn_relu(b3, m3, c3, 3, 1, 1, ib, name + "_b3_conv2", false);
  int b4 = b.pool(src, cin, PoolType::Average, 3, 1, 1, ib, name + "_b4_pool");
  b4 = b.conv_bn_relu(b4, cin, c4, 1, 1, 0, ib, name + "_b4_conv", false);
  *out_channels = c1 + c2 + c3 + c4;
  return b.junction(LayerKind::Concat, {b1, b2, b3, b4}, *out_channels, *out_channels, name + "_concat");
}

NetworkDescriptor build_inception(const ScaleConfig& scale, int width) {
  require_spatial(scale, 4, "inception_small");
  Builder b("inception_small", scale);
  const int stem_c = 2 * width;
  const int stem = b.conv_bn_relu(-1, scale.input.channels, stem_c, 3, 1, 1, Connection::Sequential, "stem", false);
  int src = b.pool(stem, stem_c, PoolType::Max, 2, 2, 0, Connection::Sequential, "pool1");
  int c1 = 0;
  const int m1 = inception_module(b, src, stem_c, width, "inc1", &c1);
  src = b.pool(m1, c1, PoolType::Max, 2, 2, 0, Connection::Sequential, "pool2");
  int c2 = 0;
  const int m2 = inception_module(b, src, c1, 2 * width, "inc2", &c2);
  src = b.pool(m2, c2, PoolType::GlobalAverage, 0, 1, 0, Connection::Sequential, "gap");
  b.linear(src, c2, scale.num_classes);
  return b.finish({stem, m1, m2});
}

}  // namespace

NetworkDescriptor build_descriptor(Arch arch, const ScaleConfig& scale) {
  if (scale.num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (scale.input.channels < 1) throw ConfigError("input needs at least one channel");
  switch (arch) {
    case Arch::VggSmall: {
      require_spatial(scale, 8, "vgg_small");
      const int w = scale.width > 0 ? scale.width : 16;
      return build_vgg("vgg_small", scale, {w, w, kPool, 2 * w, 2 * w, kPool, 4 * w, 4 * w, kPool, 8 * w, 8 * w},
                       false);
    }
    case Arch::Vgg16: {
      require_spatial(scale, 32, "vgg16");
      const int w = scale.width > 0 ? scale.width : 64;
      return build_vgg("vgg16", scale,
                       {w, w, kPool, 2 * w, 2 * w, kPool, 4 * w, 4 * w, 4 * w, kPool, 8 * w, 8 * w, 8 * w, kPool,
                        8 * w, 8 * w, 8 * w, kPool},
                       true);
    }
    case Arch::ResnetBasic:
      return build_resnet(scale, scale.width > 0 ? scale.width : 16);
    case Arch::InceptionSmall:
      return build_inception(scale, scale.width > 0 ? scale.width : 16);
  }
  throw ConfigError("unknown architecture");
}

}  // namespace aip
