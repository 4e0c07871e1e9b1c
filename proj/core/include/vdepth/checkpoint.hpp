#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vdepth/config.hpp"
#include "vdepth/tensor.hpp"

namespace vdepth {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Tensor<float> value;

  bool operator==(const NamedArray& o) const = default;
};

/// Everything needed to rebuild a trained model: parameters, normalization
/// statistics, optimizer state and the training configuration.
struct CheckpointBundle {
  std::uint32_t version = kCheckpointVersion;
  ConfigMap config;  ///< TrainConfig snapshot
  std::int64_t epoch = 0;  ///< completed epochs
  std::int64_t step = 0;  ///< generator updates so far
  std::int64_t gen_optimizer_steps = 0;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
  bool operator==(const CheckpointBundle& o) const = default;
};

// Layout, all integers little-endian:
//   "VDCK" | u32 version | u64 manifest length | manifest JSON | payload | u32 crc32
// The manifest lists name, shape, dtype ("f32") and payload byte offset of
// every array. The checksum covers every preceding byte.
std::string serialize_checkpoint(const CheckpointBundle& bundle);
CheckpointBundle deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path);
CheckpointBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace vdepth
