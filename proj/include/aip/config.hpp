#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace aip {

/// Which terms enter the student objective. Cross-entropy is always present:
/// with kd off, the distillation term degenerates to plain cross-entropy.
struct LossComponents {
  bool at = true;
  bool kd = true;
  bool adv = true;

  bool operator==(const LossComponents&) const = default;
};

LossComponents parse_loss_components(const std::string& text);
std::string to_string(const LossComponents& c);

inline constexpr LossComponents kPruneLosses{true, true, true};
inline constexpr LossComponents kRetrainLosses{true, true, false};

/// Every knob of a run. Defaults follow the CIFAR protocol: alpha 0.3,
/// s_p 10, N 30, lr 0.1 with momentum 0.9 and weight decay 1e-4, 160
/// baseline epochs.
struct RunConfig {
  std::string name = "run";
  std::string arch = "vgg_small";
  std::string dataset = "synthetic";  // synthetic | cifar10 | cifar100
  std::string data_dir;
  int num_classes = 10;
  double k = 0.3;
  int s_p = 10;
  int N = 30;
  double alpha = 0.3;
  double t_emp = 4.0;
  double lr = 0.1;
  double prune_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 64;
  int baseline_epochs = 160;
  double retrain_cap = 4.0;  // retraining epochs <= retrain_cap * baseline_epochs
  std::uint64_t seed = 0;
  std::optional<LossComponents> loss_components;  // unset: phase default
  std::string out_dir = "runs";

  // Model scale and the synthetic dataset.
  int image_size = 16;
  int width = 0;
  int depth = 20;
  int train_samples = 5000;
  int test_samples = 1000;
  bool augment = true;
  double noise = 0.02;  // pixel noise std of the synthetic images

  bool operator==(const RunConfig&) const = default;
};

inline constexpr const char* kDataDirEnv = "AIP_DATA_DIR";

/// Parses `key = value` lines ('#' starts a comment). Unknown keys, bad
/// values and out-of-range settings throw ConfigError naming the key. A
/// missing data_dir falls back to $AIP_DATA_DIR.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
/// Range checks shared by the parser and CLI overrides.
void validate(const RunConfig& cfg);
/// Canonical document; parse_config(serialize(c)) == c.
std::string serialize(const RunConfig& cfg);

LossComponents prune_losses(const RunConfig& cfg);
LossComponents retrain_losses(const RunConfig& cfg);

}  // namespace aip
