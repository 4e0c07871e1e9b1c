#include "vdepth/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <exception>
#include <thread>

#include "vdepth/image_io.hpp"

namespace vdepth {

std::string mode_name(InferenceMode mode) { return mode == InferenceMode::Serial ? "s_mode" : "ps_mode"; }

InferenceMode parse_mode(const std::string& name) {
  if (name == "s_mode" || name == "s") return InferenceMode::Serial;
  if (name == "ps_mode" || name == "ps") return InferenceMode::ParallelSpatial;
  throw PreconditionError("unknown inference mode '" + name + "' (expected s_mode or ps_mode)");
}

StreamingDepth::StreamingDepth(DepthModel& model) : model_(&model), stepper_(model.clstm) {}

Tensor<float> StreamingDepth::push(const Tensor<float>& features, std::size_t out_h, std::size_t out_w) {
  NoGradGuard guard;
  const Tensor<float> logits =
      model_->uses_clstm() ? stepper_.push(features) : model_->head.logits(Var<float>(features)).value();
  const auto depth = depth_from_logits(Var<float>(logits), out_h, out_w, model_->head_config().d_min);
  return depth.value().reshaped({out_h, out_w});
}

void StreamingDepth::reset() { stepper_.reset(); }

namespace {

Tensor<float> stack(const std::vector<Tensor<float>>& rgb, std::size_t begin, std::size_t end) {
  const Shape& s = rgb[begin].shape();
  const std::size_t plane = rgb[begin].size();
  Tensor<float> out({end - begin, s[0], s[1], s[2]});
  for (std::size_t i = begin; i < end; ++i) {
    VDEPTH_REQUIRE(rgb[i].shape() == s, "inference: frame shapes differ");
    std::copy_n(rgb[i].data(), plane, out.data() + (i - begin) * plane);
  }
  return out;
}

std::vector<Tensor<float>> unstack(const Tensor<float>& batch) {
  Shape one = batch.shape();
  one[0] = 1;
  const std::size_t n = batch.dim(0), size = batch.size() / n;
  std::vector<Tensor<float>> out;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<float> t(one);
    std::copy_n(batch.data() + i * size, size, t.data());
    out.push_back(std::move(t));
  }
  return out;
}

std::size_t resolve_workers(std::size_t requested) {
  if (requested) return requested;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void check_frames(const std::vector<Tensor<float>>& rgb) {
  VDEPTH_REQUIRE(!rgb.empty(), "inference: no frames");
  VDEPTH_REQUIRE(rgb[0].rank() == 3 && rgb[0].dim(0) == 3,
                 "inference: expected [3,H,W] frames, got " + shape_to_string(rgb[0].shape()));
}

// Runs frames [begin, end) through the model in the given mode, appending to
// `out`. `on_output` is called after each depth map is produced.
template <typename F>
void process(DepthModel& model, StreamingDepth& stream, const std::vector<Tensor<float>>& rgb, std::size_t begin,
             std::size_t end, InferenceMode mode, const InferenceOptions& options, std::vector<Tensor<float>>& out,
             F&& on_output) {
  const std::size_t h = rgb[0].dim(1), w = rgb[0].dim(2);
  if (mode == InferenceMode::Serial) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto features = extract_features(model.backbone, stack(rgb, i, i + 1));
      out.push_back(stream.push(features, h, w));
      on_output();
    }
    return;
  }
  VDEPTH_REQUIRE(options.chunk >= 1, "inference: chunk must be >= 1");
  const std::size_t workers = resolve_workers(options.workers);
  for (std::size_t c0 = begin; c0 < end; c0 += options.chunk) {
    const std::size_t c1 = std::min(end, c0 + options.chunk);
    const std::vector<Tensor<float>> chunk(rgb.begin() + static_cast<std::ptrdiff_t>(c0),
                                           rgb.begin() + static_cast<std::ptrdiff_t>(c1));
    const auto features = extract_features_parallel(model.backbone, chunk, workers);
    for (const auto& f : features) {
      out.push_back(stream.push(f, h, w));
      on_output();
    }
  }
}

}  // namespace

std::vector<Tensor<float>> extract_features_parallel(Backbone<float>& backbone, const std::vector<Tensor<float>>& rgb,
                                                     std::size_t workers) {
  check_frames(rgb);
  workers = std::clamp<std::size_t>(workers, 1, rgb.size());
  std::vector<Tensor<float>> out(rgb.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    auto parts = unstack(extract_features(backbone, stack(rgb, begin, end)));
    std::move(parts.begin(), parts.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
  };
  if (workers == 1) {
    run(0, rgb.size());
    return out;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t per = (rgb.size() + workers - 1) / workers;
  for (std::size_t k = 0; k < workers; ++k) {
    const std::size_t begin = k * per, end = std::min(rgb.size(), begin + per);
    if (begin >= end) break;
    threads.emplace_back([&, k, begin, end] {
      try {
        run(begin, end);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<Tensor<float>> run_inference(DepthModel& model, const std::vector<Tensor<float>>& rgb,
                                         InferenceMode mode, const InferenceOptions& options) {
  check_frames(rgb);
  StreamingDepth stream(model);
  std::vector<Tensor<float>> out;
  process(model, stream, rgb, 0, rgb.size(), mode, options, out, [] {});
  return out;
}

std::string BenchReport::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "mode=%s\nms_per_frame=%.4f\nfps=%.3f\nn_frames_timed=%zu\nwarmup_frames=%zu\n"
                "first_frame_latency_ms=%.4f\nworkers=%zu\n",
                mode_name(mode).c_str(), ms_per_frame, fps, n_frames_timed, warmup_frames, first_frame_latency_ms,
                workers);
  return buf;
}

BenchReport benchmark(DepthModel& model, const std::vector<Tensor<float>>& rgb, InferenceMode mode,
                      const BenchOptions& options, std::vector<Tensor<float>>* outputs) {
  check_frames(rgb);
  VDEPTH_REQUIRE(rgb.size() >= options.warmup + 100,
                 "bench: need at least warmup + 100 = " + std::to_string(options.warmup + 100) + " frames, got " +
                     std::to_string(rgb.size()));
  using clock = std::chrono::steady_clock;
  StreamingDepth stream(model);
  std::vector<Tensor<float>> out;
  out.reserve(rgb.size());
  if (options.warmup) process(model, stream, rgb, 0, options.warmup, mode, options.inference, out, [] {});

  const auto start = clock::now();
  clock::time_point first{};
  bool seen = false;
  process(model, stream, rgb, options.warmup, rgb.size(), mode, options.inference, out, [&] {
    if (!seen) {
      first = clock::now();
      seen = true;
    }
  });
  const auto stop = clock::now();

  BenchReport r;
  r.mode = mode;
  r.n_frames_timed = rgb.size() - options.warmup;
  r.warmup_frames = options.warmup;
  r.ms_per_frame = std::chrono::duration<double, std::milli>(stop - start).count() / static_cast<double>(r.n_frames_timed);
  r.fps = 1000.0 / r.ms_per_frame;
  r.first_frame_latency_ms = std::chrono::duration<double, std::milli>(first - start).count();
  r.workers = mode == InferenceMode::Serial ? 1 : resolve_workers(options.inference.workers);
  if (outputs) *outputs = std::move(out);
  return r;
}

// ---- prediction output -----------------------------------------------------

std::array<float, 3> viridis(double t) {
  static constexpr float stops[9][3] = {
      {0.267004f, 0.004874f, 0.329415f}, {0.282623f, 0.140926f, 0.457517f}, {0.253935f, 0.265254f, 0.529983f},
      {0.206756f, 0.371758f, 0.553117f}, {0.163625f, 0.471133f, 0.558148f}, {0.127568f, 0.566949f, 0.550556f},
      {0.134692f, 0.658636f, 0.517649f}, {0.266941f, 0.748751f, 0.440573f}, {0.993248f, 0.906157f, 0.143936f}};
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * 8.0;
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), 7);
  const auto f = static_cast<float>(t - static_cast<double>(i));
  return {stops[i][0] + f * (stops[i + 1][0] - stops[i][0]), stops[i][1] + f * (stops[i + 1][1] - stops[i][1]),
          stops[i][2] + f * (stops[i + 1][2] - stops[i][2])};
}

Tensor<float> colorize_depth(const Tensor<float>& depth, double lo, double hi) {
  VDEPTH_REQUIRE(depth.rank() == 2, "colorize_depth: expected [H,W]");
  const std::size_t hw = depth.size();
  Tensor<float> out({3, depth.dim(0), depth.dim(1)});
  for (std::size_t i = 0; i < hw; ++i) {
    const double t = hi > lo ? (static_cast<double>(depth[i]) - lo) / (hi - lo) : 0.0;
    const auto c = viridis(t);
    for (std::size_t ch = 0; ch < 3; ++ch) out[ch * hw + i] = c[ch];
  }
  return out;
}

PredictSummary predict_directory(DepthModel& model, const std::filesystem::path& input_root,
                                 const std::filesystem::path& output_root, bool emit_colormap) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(input_root)) throw IoError("input directory " + input_root.string() + " does not exist");
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(input_root))
    if (entry.is_directory() && fs::is_directory(entry.path() / "rgb")) ids.push_back(entry.path().filename().string());
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw IoError("no <id>/rgb/ sequences under " + input_root.string());

  PredictSummary summary;
  for (const auto& id : ids) {
    const fs::path dir = input_root / id;
    DepthSequenceSample s;
    for (std::size_t t = 0; fs::exists(dir / "rgb" / frame_filename(t)); ++t)
      s.rgb.push_back(io::read_rgb_png(dir / "rgb" / frame_filename(t)));
    if (s.rgb.empty()) throw IoError("sequence " + dir.string() + " has no frame " + frame_filename(0));
    if (fs::exists(dir / "meta.json")) s.fps = read_sequence_meta(input_root, id).fps;
    s.depth = model.predict(s.rgb);
    for (std::size_t t = 0; t < s.rgb.size(); ++t) {
      s.valid_mask.emplace_back(s.depth[t].shape(), 1);
      s.frame_ids.push_back(static_cast<int>(t));
    }
    save_sequence(s, output_root, id);
    if (emit_colormap) {
      float lo = s.depth[0][0], hi = lo;
      for (const auto& d : s.depth)
        for (float v : d.values()) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      fs::create_directories(output_root / id / "colormap");
      for (std::size_t t = 0; t < s.depth.size(); ++t)
        io::write_rgb_png(output_root / id / "colormap" / frame_filename(t), colorize_depth(s.depth[t], lo, hi));
    }
    ++summary.sequences;
    summary.frames += s.size();
  }
  return summary;
}

}  // namespace vdepth
