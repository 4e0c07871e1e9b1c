#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vdepth/adversary.hpp"
#include "vdepth/backbone.hpp"
#include "vdepth/checkpoint.hpp"
#include "vdepth/clstm.hpp"
#include "vdepth/config.hpp"
#include "vdepth/error.hpp"
#include "vdepth/metrics.hpp"
#include "vdepth/synthdata.hpp"

namespace vdepth {

/// Independent stream seeds from one base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Backbone plus either the CLSTM or the per-frame baseline head, and the
/// discriminator when adversarial training is enabled.
class DepthModel {
 public:
  explicit DepthModel(const TrainConfig& config);

  /// frames [T*B, 3, H, W], time-major (frame t of sequence b at row t*B+b)
  /// -> depth [T*B, 1, H, W] in meters.
  Var<float> forward(const Var<float>& frames, std::size_t time_steps, bool training);

  /// Inference over one sequence of [3, H, W] frames -> [H, W] depth maps.
  std::vector<Tensor<float>> predict(const std::vector<Tensor<float>>& rgb);

  nn::ParameterRefs<float> generator_refs();
  nn::ParameterRefs<float> discriminator_refs();

  const TrainConfig& config() const { return config_; }
  const ClstmConfig& head_config() const { return head_config_; }
  bool uses_clstm() const { return config_.use_clstm; }
  bool has_discriminator() const { return config_.use_gan; }

  Backbone<float> backbone;
  ConvLstm<float> clstm;
  BaselineHead<float> head;
  Discriminator<float> discriminator;

 private:
  TrainConfig config_;
  ClstmConfig head_config_;
};

/// Model parameters and statistics only; optimizer state is added by train().
CheckpointBundle make_checkpoint(DepthModel& model);
void load_model_state(DepthModel& model, const CheckpointBundle& bundle);
/// Rebuilds the model described by the bundle's configuration snapshot.
DepthModel model_from_checkpoint(const CheckpointBundle& bundle);

// ---- data ----------------------------------------------------------------

struct Dataset {
  std::vector<std::string> ids;
  std::vector<DepthSequenceSample> sequences;

  std::size_t size() const { return sequences.size(); }
  bool empty() const { return sequences.empty(); }
};

/// Sequence i is generated from derive_seed(seed, i) and named seq_%05d.
Dataset generate_dataset(const SceneSpec& spec, std::size_t n_sequences, std::size_t n_frames, std::uint64_t seed);
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);
Dataset load_dataset(const std::filesystem::path& root);

struct DatasetSplit {
  std::vector<std::size_t> train, validation;
};
/// A seeded shuffle; the first round(val_fraction * n) indices validate.
DatasetSplit split_dataset(std::size_t n, double val_fraction, std::uint64_t seed);

// ---- training ------------------------------------------------------------

/// One generator step. d_loss is NaN when the discriminator was not updated.
struct StepLog {
  std::size_t epoch = 0;  ///< 1-based
  std::size_t step = 0;  ///< 1-based, counted over the whole run
  double l_depth = 0, l_grad = 0, l_normal = 0, l_spatial = 0;
  double l_temporal = 0, l_total = 0;
  double d_loss = 0;

  bool discriminator_updated() const;
  static std::string header();
  std::string to_line() const;
  static StepLog parse(const std::string& line);
};

struct EpochSummary {
  std::size_t epoch = 0;
  double gen_lr = 0;
  double mean_spatial = 0, mean_total = 0;
  std::optional<MetricReport> validation;

  std::string to_line() const;
};

struct TrainOptions {
  std::ostream* step_log = nullptr;  ///< receives StepLog lines as they happen
  std::ostream* epoch_log = nullptr;
  /// Where the last finite state is written when training diverges.
  std::filesystem::path divergence_checkpoint;
};

struct TrainResult {
  CheckpointBundle checkpoint;
  std::vector<StepLog> steps;
  std::vector<EpochSummary> epochs;
  DatasetSplit split;
};

/// Raised on a non-finite loss. Carries the state at the end of the last
/// completed epoch (or the initial state).
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, CheckpointBundle last_finite)
      : DivergenceError(what), last_finite(std::move(last_finite)) {}
  CheckpointBundle last_finite;
};

TrainResult train(const TrainConfig& config, const Dataset& data, const TrainOptions& options = {});
TrainResult train(const TrainConfig& config, const std::filesystem::path& dataset_root,
                  const TrainOptions& options = {});

// ---- evaluation ----------------------------------------------------------

struct EvalOptions {
  std::size_t window = 16;  ///< frames per temporal-metric window
  bool compute_tmc = true;
  TemporalOptions temporal;
};

/// Produces one [H, W] depth map per frame of the given sequence.
using SequencePredictor = std::function<std::vector<Tensor<float>>(const DepthSequenceSample&)>;

/// Sequences are cut into consecutive windows of `window` frames (the last
/// one may be shorter). Spatial metrics pool every frame; TCC and TMC average
/// over windows with at least two frames.
MetricReport evaluate_predictor(const SequencePredictor& predict, const std::vector<const DepthSequenceSample*>& seqs,
                                const EvalOptions& options = {});
MetricReport evaluate(DepthModel& model, const Dataset& data, const std::vector<std::size_t>& indices,
                      const EvalOptions& options = {});
MetricReport evaluate(const CheckpointBundle& checkpoint, const std::filesystem::path& dataset_root,
                      std::size_t n_frames_eval);

}  // namespace vdepth
