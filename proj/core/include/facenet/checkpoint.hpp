#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "facenet/tensor.hpp"

namespace facenet::train {

/// Everything needed to resume: the config it was trained with, the
/// position in the schedule, and named tensors (parameters and optimizer
/// moments).
struct CheckpointData {
  std::string config_text;
  std::int64_t num_classes = 0;
  std::int64_t epoch = 0;  // last completed epoch
  std::int64_t step = 0;   // global optimizer steps taken
  std::int64_t adam_t = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

/// Writes to a sibling temporary file and renames it into place, so a crash
/// never leaves a truncated checkpoint behind.
void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::filesystem::path& path);

}  // namespace facenet::train
