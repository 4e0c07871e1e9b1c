#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vdepth/checkpoint.hpp"
#include "vdepth/config.hpp"
#include "vdepth/error.hpp"
#include "vdepth/inference.hpp"
#include "vdepth/pipeline.hpp"
#include "vdepth/synthdata.hpp"

namespace fs = std::filesystem;
using namespace vdepth;

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kBadArguments = 2, kIoFailure = 3, kDiverged = 4 };

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App& cmd, CommonFlags& flags, bool out_required) {
  cmd.add_option("--config", flags.config_path, "key = value file with TrainConfig and SceneSpec fields");
  cmd.add_option("--seed", flags.seed, "base seed (overrides the config file)");
  auto* out = cmd.add_option("--out", flags.out, "output path");
  if (out_required) out->required();
}

/// Both parameter sets are read from the same file; any key neither of them
/// knows is rejected.
struct Settings {
  TrainConfig train;
  SceneSpec scene;
};

Settings load_settings(const CommonFlags& flags) {
  Settings s;
  if (!flags.config_path.empty()) {
    ConfigMap map;
    try {
      map = read_config_file(flags.config_path);
    } catch (const FormatError& e) {
      throw PreconditionError(flags.config_path + ": " + e.what());
    }
    std::set<std::string> used;
    apply_config(map, s.train, &used);
    apply_config(map, s.scene, &used);
    for (const auto& [key, value] : map)
      if (!used.count(key)) throw PreconditionError("unknown configuration key '" + key + "'");
  }
  if (flags.seed) s.train.seed = *flags.seed;
  s.train.validate();
  return s;
}

DepthModel load_model(const std::string& checkpoint) { return model_from_checkpoint(load_checkpoint(checkpoint)); }

int cmd_gen_data(const CommonFlags& flags, std::size_t sequences, std::size_t frames) {
  const Settings s = load_settings(flags);
  if (sequences == 0 || frames == 0) throw PreconditionError("--sequences and --frames must be positive");
  const Dataset data = generate_dataset(s.scene, sequences, frames, s.train.seed);
  save_dataset(data, flags.out);
  std::cout << "wrote " << data.size() << " sequences x " << frames << " frames to " << flags.out << "\n";
  return kOk;
}

int cmd_train(const CommonFlags& flags, const std::string& data_dir, const std::string& log_path) {
  const Settings s = load_settings(flags);
  const fs::path out = flags.out;
  const fs::path log = log_path.empty() ? fs::path(out).replace_extension(".log") : fs::path(log_path);
  std::ofstream step_log(log);
  if (!step_log) throw IoError("cannot write training log " + log.string());

  TrainOptions options;
  options.step_log = &step_log;
  options.epoch_log = &std::cout;
  options.divergence_checkpoint = out;
  try {
    const TrainResult result = train(s.train, fs::path(data_dir), options);
    save_checkpoint(result.checkpoint, out);
    std::cout << "checkpoint " << out.string() << "\n";
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "last finite state (epoch " << e.last_finite.epoch << ") written to " << out.string() << "\n";
    return kDiverged;
  }
  return kOk;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint, const std::string& data_dir,
             std::size_t frames) {
  if (!flags.config_path.empty() || flags.seed) load_settings(flags);
  const MetricReport report = evaluate(load_checkpoint(checkpoint), fs::path(data_dir), frames);
  std::cout << report.to_text();
  if (!flags.out.empty()) {
    const fs::path base = flags.out;
    report.write(fs::path(base).replace_extension(".txt"), fs::path(base).replace_extension(".json"));
  }
  return kOk;
}

int cmd_predict(const CommonFlags& flags, const std::string& checkpoint, const std::string& input, bool colormap) {
  if (!flags.config_path.empty() || flags.seed) load_settings(flags);
  DepthModel model = load_model(checkpoint);
  const PredictSummary summary = predict_directory(model, input, flags.out, colormap);
  std::cout << "predicted " << summary.frames << " frames in " << summary.sequences << " sequences\n";
  return kOk;
}

struct BenchFlags {
  std::string checkpoint;
  std::string mode = "both";
  std::size_t frames = 220;
  std::size_t chunk = 120;
  std::size_t warmup = 20;
  std::size_t workers = 0;
};

int cmd_bench(const CommonFlags& flags, const BenchFlags& b) {
  const Settings s = load_settings(flags);
  DepthModel model = load_model(b.checkpoint);
  const DepthSequenceSample clip = generate_synthetic_sequence(s.scene, b.frames, s.train.seed);

  BenchOptions options;
  options.warmup = b.warmup;
  options.inference.chunk = b.chunk;
  options.inference.workers = b.workers;

  std::vector<InferenceMode> modes;
  if (b.mode == "both") {
    modes = {InferenceMode::Serial, InferenceMode::ParallelSpatial};
  } else {
    modes = {parse_mode(b.mode)};
  }

  std::string text;
  std::vector<std::vector<Tensor<float>>> outputs(modes.size());
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const BenchReport report = benchmark(model, clip.rgb, modes[i], options, &outputs[i]);
    text += report.to_text();
    std::cout << report.to_text();
  }
  if (outputs.size() == 2) {
    bool identical = outputs[0].size() == outputs[1].size();
    for (std::size_t t = 0; identical && t < outputs[0].size(); ++t)
      identical = outputs[0][t].shape() == outputs[1][t].shape() &&
                  std::memcmp(outputs[0][t].data(), outputs[1][t].data(), outputs[0][t].size() * sizeof(float)) == 0;
    const std::string line = std::string("outputs_identical=") + (identical ? "true" : "false") + "\n";
    text += line;
    std::cout << line;
  }
  if (!flags.out.empty()) {
    std::ofstream f(flags.out);
    if (!(f << text)) throw IoError("cannot write " + flags.out);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporally consistent monocular video depth estimation"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, eval_flags, predict_flags, bench_flags;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic RGB-D sequence dataset");
  add_common(*gen, gen_flags, true);
  std::size_t gen_sequences = 200, gen_frames = 5;
  gen->add_option("--sequences", gen_sequences, "number of sequences");
  gen->add_option("--frames", gen_frames, "frames per sequence");

  auto* trn = app.add_subcommand("train", "train a model and write its checkpoint");
  add_common(*trn, train_flags, true);
  std::string train_data, train_log;
  trn->add_option("--data", train_data, "dataset directory")->required();
  trn->add_option("--log", train_log, "per-step log (default: <out>.log)");

  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(*evl, eval_flags, false);
  std::string eval_ckpt, eval_data;
  std::size_t eval_frames = 16;
  evl->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  evl->add_option("--data", eval_data, "dataset directory")->required();
  evl->add_option("--frames", eval_frames, "frames per temporal-metric window");

  auto* prd = app.add_subcommand("predict", "write depth maps for every sequence in a directory");
  add_common(*prd, predict_flags, true);
  std::string predict_ckpt, predict_input;
  bool predict_colormap = false;
  prd->add_option("--checkpoint", predict_ckpt, "checkpoint file")->required();
  prd->add_option("--input", predict_input, "directory of <id>/rgb/ sequences")->required();
  prd->add_flag("--colormap", predict_colormap, "also write color-mapped frames");

  auto* bch = app.add_subcommand("bench", "time s_mode and ps_mode inference");
  add_common(*bch, bench_flags, false);
  BenchFlags bench;
  bch->add_option("--checkpoint", bench.checkpoint, "checkpoint file")->required();
  bch->add_option("--mode", bench.mode, "s, ps or both")->check(CLI::IsMember({"s", "ps", "s_mode", "ps_mode", "both"}));
  bch->add_option("--frames", bench.frames, "synthetic frames to process");
  bch->add_option("--chunk", bench.chunk, "ps_mode backbone chunk");
  bch->add_option("--warmup", bench.warmup, "untimed leading frames");
  bch->add_option("--workers", bench.workers, "ps_mode backbone threads (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadArguments;
  }

  try {
    if (*gen) return cmd_gen_data(gen_flags, gen_sequences, gen_frames);
    if (*trn) return cmd_train(train_flags, train_data, train_log);
    if (*evl) return cmd_eval(eval_flags, eval_ckpt, eval_data, eval_frames);
    if (*prd) return cmd_predict(predict_flags, predict_ckpt, predict_input, predict_colormap);
    if (*bch) return cmd_bench(bench_flags, bench);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadArguments;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kBadArguments;
}
