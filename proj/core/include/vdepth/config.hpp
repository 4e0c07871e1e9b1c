#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "vdepth/synthdata.hpp"

namespace vdepth {

struct TrainConfig {
  std::string preset = "tiny";
  std::size_t epochs = 20;
  double gen_lr = 1e-4;
  double lr_decay = 0.1;  ///< multiplier applied every lr_decay_every epochs
  std::size_t lr_decay_every = 5;
  double weight_decay = 1e-4;
  double disc_lr = 0.1;
  double disc_momentum = 0.9;
  std::size_t warmup_epochs = 1;
  std::size_t n_frames = 5;
  std::size_t batch_sequences = 4;
  std::size_t steps_per_epoch = 0;  ///< 0: one pass over the training split
  std::uint64_t seed = 0;
  bool use_clstm = true;
  bool use_gan = true;
  bool augment = true;
  double val_fraction = 0.1;
  std::size_t eval_frames = 16;
  bool validate_each_epoch = true;
  double alpha = 0.1;  ///< weight of the temporal term
  double mix_prob = 0.25;

  void validate() const;
};

/// `key = value` lines; `#` starts a comment.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap read_config_file(const std::filesystem::path& path);

// Each apply_* reads the keys it knows and records them in `used`.
void apply_config(const ConfigMap& map, TrainConfig& config, std::set<std::string>* used = nullptr);
void apply_config(const ConfigMap& map, SceneSpec& spec, std::set<std::string>* used = nullptr);

ConfigMap to_config_map(const TrainConfig& config);
ConfigMap to_config_map(const SceneSpec& spec);
std::string format_config(const ConfigMap& map);

}  // namespace vdepth
