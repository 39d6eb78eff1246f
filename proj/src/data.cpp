#include "aip/data.hpp"

#include "aip/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace aip {
namespace {

struct Blob {
  double cy, cx, sigma;
  std::vector<double> color;
};

void render(const std::vector<Blob>& blobs, const SyntheticSpec& spec, std::mt19937_64& rng, float* out) {
  const Shape& s = spec.shape;
  std::normal_distribution<double> jitter(0.0, 0.07 * s.height);
  std::uniform_real_distribution<double> amp(0.6, 1.4);
  std::normal_distribution<double> noise(0.0, spec.noise);
  std::vector<double> img(s.numel(), 0.0);
  for (const Blob& b : blobs) {
    const double cy = b.cy + jitter(rng);
    const double cx = b.cx + jitter(rng);
    const double a = amp(rng);
    const double inv = 1.0 / (2.0 * b.sigma * b.sigma);
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        const double g = a * std::exp(-((y - cy) * (y - cy) + (x - cx) * (x - cx)) * inv);
        for (int c = 0; c < s.channels; ++c) img[(static_cast<std::size_t>(c) * s.height + y) * s.width + x] += g * b.color[c];
      }
    }
  }
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = static_cast<float>(img[i] + noise(rng));
}

Dataset sample_split(const std::vector<std::vector<Blob>>& protos, const SyntheticSpec& spec, int count,
                     std::uint64_t seed) {
  Dataset d;
  d.shape = spec.shape;
  d.num_classes = spec.num_classes;
  d.pixels.resize(static_cast<std::size_t>(count) * spec.shape.numel());
  d.labels.resize(count);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    const int label = i % spec.num_classes;
    d.labels[i] = label;
    render(protos[label], spec, rng, d.pixels.data() + static_cast<std::size_t>(i) * spec.shape.numel());
  }
  return d;
}

void read_cifar_file(const std::filesystem::path& path, int label_bytes, Dataset& d) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact(path.string());
  const std::size_t pixels = 3 * 32 * 32;
  std::vector<unsigned char> record(label_bytes + pixels);
  while (in.read(reinterpret_cast<char*>(record.data()), static_cast<std::streamsize>(record.size()))) {
    d.labels.push_back(record[label_bytes - 1]);
    for (std::size_t i = 0; i < pixels; ++i) d.pixels.push_back(record[label_bytes + i] / 255.0f);
  }
  if (in.gcount() != 0) throw std::runtime_error("truncated CIFAR record in " + path.string());
}

}  // namespace

Splits make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 17);
  std::uniform_real_distribution<double> pos(0.15, 0.85);
  std::uniform_real_distribution<double> size(0.08, 0.2);
  std::uniform_real_distribution<double> col(-1.0, 1.0);
  std::vector<std::vector<Blob>> protos(spec.num_classes);
  for (auto& blobs : protos) {
    for (int b = 0; b < spec.blobs_per_class; ++b) {
      Blob blob{pos(rng) * spec.shape.height, pos(rng) * spec.shape.width, size(rng) * spec.shape.height, {}};
      for (int c = 0; c < spec.shape.channels; ++c) blob.color.push_back(col(rng));
      blobs.push_back(std::move(blob));
    }
  }
  return {sample_split(protos, spec, spec.train_samples, seed * 2 + 1),
          sample_split(protos, spec, spec.test_samples, seed * 2 + 2)};
}

Splits load_cifar(const std::filesystem::path& dir, int num_classes) {
  Splits s;
  for (Dataset* d : {&s.train, &s.test}) {
    d->shape = {3, 32, 32};
    d->num_classes = num_classes;
  }
  if (num_classes == 10) {
    for (int b = 1; b <= 5; ++b) read_cifar_file(dir / ("data_batch_" + std::to_string(b) + ".bin"), 1, s.train);
    read_cifar_file(dir / "test_batch.bin", 1, s.test);
  } else if (num_classes == 100) {
    read_cifar_file(dir / "train.bin", 2, s.train);
    read_cifar_file(dir / "test.bin", 2, s.test);
  } else {
    throw ConfigError("CIFAR loader supports 10 or 100 classes");
  }
  for (const Dataset* d : {&s.train, &s.test})
    for (int l : d->labels)
      if (l >= num_classes) throw std::runtime_error("CIFAR label out of range in " + dir.string());
  return s;
}

Normalization channel_stats(const Dataset& data) {
  const Shape& s = data.shape;
  Normalization n;
  n.mean.assign(s.channels, 0.0f);
  n.stddev.assign(s.channels, 1.0f);
  for (int c = 0; c < s.channels; ++c) {
    double sum = 0, sq = 0;
    std::size_t count = 0;
    for (int i = 0; i < data.size(); ++i) {
      const float* plane = data.image(i) + static_cast<std::size_t>(c) * s.spatial();
      for (int p = 0; p < s.spatial(); ++p) {
        sum += plane[p];
        sq += static_cast<double>(plane[p]) * plane[p];
      }
      count += s.spatial();
    }
    const double mean = sum / std::max<std::size_t>(count, 1);
    const double var = sq / std::max<std::size_t>(count, 1) - mean * mean;
    n.mean[c] = static_cast<float>(mean);
    n.stddev[c] = static_cast<float>(std::sqrt(std::max(var, 1e-12)));
  }
  return n;
}

BatchLoader::BatchLoader(const Dataset& data, Normalization norm, int batch_size, bool shuffle, bool augment,
                         std::uint64_t seed)
    : data_(&data), norm_(std::move(norm)), batch_size_(batch_size), shuffle_(shuffle), augment_(augment),
      seed_(seed) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (data.size() == 0) throw std::invalid_argument("dataset is empty");
  start_epoch(0);
}

int BatchLoader::batches_per_epoch() const { return (data_->size() + batch_size_ - 1) / batch_size_; }

void BatchLoader::start_epoch(int epoch) {
  order_.resize(data_->size());
  std::iota(order_.begin(), order_.end(), 0);
  rng_.seed(seed_ * 1000003ULL + static_cast<std::uint64_t>(epoch));
  if (shuffle_) std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

bool BatchLoader::next(FeatureMap<float>& images, std::vector<int>& labels) {
  if (cursor_ >= order_.size()) return false;
  const Shape& s = data_->shape;
  const int n = static_cast<int>(std::min<std::size_t>(batch_size_, order_.size() - cursor_));
  images = FeatureMap<float>(s.channels, n, s.height, s.width);
  labels.resize(n);
  const int pad = std::max(1, s.height / 8);
  std::uniform_int_distribution<int> shift(-pad, pad);
  std::bernoulli_distribution flip(0.5);
  for (int b = 0; b < n; ++b) {
    const int idx = order_[cursor_ + b];
    labels[b] = data_->labels[idx];
    const float* img = data_->image(idx);
    int dy = 0, dx = 0;
    bool mirror = false;
    if (augment_) {
      dy = shift(rng_);
      dx = shift(rng_);
      mirror = flip(rng_);
    }
    for (int c = 0; c < s.channels; ++c) {
      const float mean = norm_.mean[c];
      const float inv = 1.0f / norm_.stddev[c];
      for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.width; ++x) {
          const int sy = y + dy;
          const int sx0 = x + dx;
          const int sx = mirror ? s.width - 1 - sx0 : sx0;
          float v = 0.0f;
          if (sy >= 0 && sy < s.height && sx0 >= 0 && sx0 < s.width)
            v = (img[(static_cast<std::size_t>(c) * s.height + sy) * s.width + sx] - mean) * inv;
          images.at(c, b, y, x) = v;
        }
      }
    }
  }
  cursor_ += n;
  return true;
}

}  // namespace aip
