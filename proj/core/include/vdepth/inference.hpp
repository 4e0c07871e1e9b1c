#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vdepth/pipeline.hpp"

namespace vdepth {

/// s_mode: each frame goes through the backbone and then the recurrent head
/// before the next one starts. ps_mode: the backbone runs on chunks of frames
/// (spread over worker threads) and the head then consumes them serially.
enum class InferenceMode { Serial, ParallelSpatial };

std::string mode_name(InferenceMode mode);
InferenceMode parse_mode(const std::string& name);

struct InferenceOptions {
  std::size_t chunk = 120;
  std::size_t workers = 0;  ///< backbone threads in ps_mode; 0 = one per hardware thread
};

/// Frame-by-frame inference with persistent recurrent state.
class StreamingDepth {
 public:
  explicit StreamingDepth(DepthModel& model);

  /// features [1, c, h, w] -> depth [H, W] at the given output size.
  Tensor<float> push(const Tensor<float>& features, std::size_t out_h, std::size_t out_w);
  void reset();

 private:
  DepthModel* model_;
  ClstmStepper<float> stepper_;
};

/// Backbone features [1, c, h, w] per frame, computed in batches of `chunk`
/// frames on `workers` threads. Identical to extracting one frame at a time.
std::vector<Tensor<float>> extract_features_parallel(Backbone<float>& backbone, const std::vector<Tensor<float>>& rgb,
                                                     std::size_t workers);

/// rgb frames [3, H, W] -> depth [H, W]. Both modes return identical bits.
std::vector<Tensor<float>> run_inference(DepthModel& model, const std::vector<Tensor<float>>& rgb,
                                         InferenceMode mode, const InferenceOptions& options = {});

struct BenchReport {
  InferenceMode mode = InferenceMode::Serial;
  double ms_per_frame = 0;  ///< steady state, after warmup
  double fps = 0;  ///< 1000 / ms_per_frame
  std::size_t n_frames_timed = 0;
  std::size_t warmup_frames = 0;
  double first_frame_latency_ms = 0;  ///< from the first timed input to its depth map
  std::size_t workers = 1;

  std::string to_text() const;
};

struct BenchOptions {
  InferenceOptions inference;
  std::size_t warmup = 20;
};

/// Requires rgb.size() >= warmup + 100. The first `warmup` frames are
/// processed untimed; the rest are timed end to end. `outputs`, when given,
/// receives every depth map.
BenchReport benchmark(DepthModel& model, const std::vector<Tensor<float>>& rgb, InferenceMode mode,
                      const BenchOptions& options = {}, std::vector<Tensor<float>>* outputs = nullptr);

// ---- prediction output ---------------------------------------------------

/// Piecewise-linear viridis through nine reference samples; t in [0, 1].
std::array<float, 3> viridis(double t);
/// depth [H, W] -> RGB [3, H, W]; lo maps to the dark end, hi to the bright end.
Tensor<float> colorize_depth(const Tensor<float>& depth, double lo, double hi);

struct PredictSummary {
  std::size_t sequences = 0;
  std::size_t frames = 0;
};

/// Reads every <input_root>/<id>/rgb/%06d.png sequence and writes
/// <output_root>/<id>/{rgb,depth}/ in the dataset layout, plus colormap/
/// frames when requested (range: min and max predicted depth of the sequence).
PredictSummary predict_directory(DepthModel& model, const std::filesystem::path& input_root,
                                 const std::filesystem::path& output_root, bool emit_colormap);

}  // namespace vdepth
