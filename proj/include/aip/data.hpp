#pragma once

#include "aip/feature_map.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace aip {

/// Images stored sample-major as C x H x W float planes.
struct Dataset {
  Shape shape;
  int num_classes = 0;
  std::vector<float> pixels;
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  const float* image(int i) const { return pixels.data() + static_cast<std::size_t>(i) * shape.numel(); }
};

struct Splits {
  Dataset train;
  Dataset test;
};

struct SyntheticSpec {
  int num_classes = 10;
  Shape shape{3, 16, 16};
  int train_samples = 5000;
  int test_samples = 1000;
  int blobs_per_class = 3;
  double noise = 0.02;
};

/// Seeded Gaussian-blob images. Each class owns a few coloured blob
/// prototypes; samples jitter blob positions and amplitudes and add pixel
/// noise. Both splits share the prototypes and differ only in sampling.
Splits make_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// CIFAR binary batches (data_batch_*.bin + test_batch.bin for 10 classes,
/// train.bin + test.bin for 100 classes) from `dir`.
Splits load_cifar(const std::filesystem::path& dir, int num_classes);

struct Normalization {
  std::vector<float> mean;
  std::vector<float> stddev;
};

/// Per-channel mean and standard deviation of a dataset.
Normalization channel_stats(const Dataset& data);

/// Shuffled mini-batches, deterministic in (seed, epoch). Training-time
/// augmentation is a zero-padded random crop (pad = height / 8, at least 1)
/// plus a random horizontal flip, applied after normalisation.
class BatchLoader {
 public:
  BatchLoader(const Dataset& data, Normalization norm, int batch_size, bool shuffle, bool augment,
              std::uint64_t seed);

  void start_epoch(int epoch);
  /// Fills the next batch; returns false when the epoch is exhausted. The
  /// trailing partial batch is kept.
  bool next(FeatureMap<float>& images, std::vector<int>& labels);
  int batches_per_epoch() const;

 private:
  const Dataset* data_;
  Normalization norm_;
  int batch_size_;
  bool shuffle_;
  bool augment_;
  std::uint64_t seed_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace aip
