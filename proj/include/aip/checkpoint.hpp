#pragma once

#include "aip/adversarial.hpp"
#include "aip/network.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace aip {

/// A trained network with the context needed to resume or report on it.
/// The descriptor travels as its text document inside the file.
struct Checkpoint {
  Network<float> network;
  std::optional<Discriminator<float>> discriminator;
  std::string config_snapshot;
  int epoch = 0;
  /// key: value lines, e.g. "accuracy: 0.9312".
  std::string metrics_summary;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Value of `key` in a key: value summary, if present.
std::optional<double> summary_value(const std::string& summary, const std::string& key);

}  // namespace aip
