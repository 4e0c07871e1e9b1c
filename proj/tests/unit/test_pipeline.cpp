#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "vdepth/checkpoint.hpp"
#include "vdepth/config.hpp"
#include "vdepth/error.hpp"
#include "vdepth/inference.hpp"
#include "vdepth/pipeline.hpp"

using namespace vdepth;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("vdepth_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SceneSpec small_spec(std::size_t size = 32) {
  SceneSpec s;
  s.height = s.width = size;
  s.n_objects = 2;
  return s;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 2;
  c.warmup_epochs = 1;
  c.n_frames = 3;
  c.batch_sequences = 2;
  c.steps_per_epoch = 2;
  c.val_fraction = 0.0;
  c.validate_each_epoch = false;
  c.seed = 5;
  return c;
}

bool same_bits(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

// ---- config ------------------------------------------------------------------

TEST(Config, ParsesKeyValueTextWithComments) {
  const auto m = parse_config_text("# header\nepochs = 7\n  gen_lr=0.001   # trailing\n\nuse_gan = false\nheight = 48\n");
  EXPECT_EQ(m.size(), 4u);
  TrainConfig c;
  SceneSpec s;
  std::set<std::string> used;
  apply_config(m, c, &used);
  apply_config(m, s, &used);
  EXPECT_EQ(c.epochs, 7u);
  EXPECT_DOUBLE_EQ(c.gen_lr, 0.001);
  EXPECT_FALSE(c.use_gan);
  EXPECT_EQ(s.height, 48u);
  EXPECT_EQ(used.size(), 4u);
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(parse_config_text("epochs 7\n"), FormatError);
  EXPECT_THROW(parse_config_text(" = 3\n"), FormatError);
  TrainConfig c;
  EXPECT_THROW(apply_config(parse_config_text("epochs = seven"), c), PreconditionError);
  EXPECT_THROW(apply_config(parse_config_text("use_gan = maybe"), c), PreconditionError);
  EXPECT_THROW(apply_config(parse_config_text("gen_lr = 1e-3x"), c), PreconditionError);
  EXPECT_THROW(read_config_file("/nonexistent/vdepth.cfg"), IoError);
}

TEST(Config, MapRoundTrip) {
  TrainConfig c;
  c.epochs = 3;
  c.gen_lr = 3.3e-4;
  c.use_clstm = false;
  c.seed = 1234567890123ull;
  TrainConfig back;
  apply_config(to_config_map(c), back);
  EXPECT_EQ(to_config_map(back), to_config_map(c));
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.gen_lr, c.gen_lr);

  SceneSpec s;
  s.camera_pan = {0.25, -0.5};
  SceneSpec sb;
  apply_config(parse_config_text(format_config(to_config_map(s))), sb);
  EXPECT_EQ(sb.camera_pan, s.camera_pan);
}

TEST(Config, TrainConfigInvariants) {
  TrainConfig c;
  c.validate();
  c.epochs = 0;
  EXPECT_THROW(c.validate(), PreconditionError);
  c = TrainConfig{};
  c.warmup_epochs = c.epochs;
  EXPECT_THROW(c.validate(), PreconditionError);
  c = TrainConfig{};
  c.n_frames = 0;
  EXPECT_THROW(c.validate(), PreconditionError);
  c = TrainConfig{};
  c.preset = "huge";
  EXPECT_THROW(c.validate(), PreconditionError);
}

// ---- checkpoint --------------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitExact) {
  CheckpointBundle b;
  b.config = {{"epochs", "3"}, {"preset", "tiny"}};
  b.epoch = 2;
  b.step = 17;
  b.gen_optimizer_steps = 17;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 3; ++i) {
    Tensor<float> t({static_cast<std::size_t>(i + 1), 5});
    for (auto& v : t.values()) v = std::normal_distribution<float>(0, 100)(rng);
    b.arrays.push_back({"a" + std::to_string(i), t});
  }
  b.arrays[0].value[0] = -0.0f;
  b.arrays[0].value[1] = std::numeric_limits<float>::denorm_min();
  b.arrays.push_back({"empty", Tensor<float>(Shape{0})});

  const auto bytes = serialize_checkpoint(b);
  const auto back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back, b);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_TRUE(std::signbit(back.arrays[0].value[0]));

  const auto dir = scratch_dir("ckpt");
  save_checkpoint(b, dir / "c.ckpt");
  EXPECT_EQ(load_checkpoint(dir / "c.ckpt"), b);
  fs::remove_all(dir);
}

TEST(Checkpoint, RejectsCorruption) {
  CheckpointBundle b;
  b.arrays.push_back({"w", Tensor<float>({4}, 1.5f)});
  const auto bytes = serialize_checkpoint(b);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 7)), CorruptionError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, 10)), CorruptionError);
  auto flipped = bytes;
  flipped[bytes.size() - 10] ^= 0x01;
  EXPECT_THROW(deserialize_checkpoint(flipped), CorruptionError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(magic), CorruptionError);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), IoError);
}

TEST(Checkpoint, RejectsOtherVersionsWithBothNumbers) {
  CheckpointBundle b;
  b.version = kCheckpointVersion + 4;
  const auto bytes = serialize_checkpoint(b);
  try {
    deserialize_checkpoint(bytes);
    FAIL() << "expected a version mismatch";
  } catch (const VersionMismatchError& e) {
    EXPECT_EQ(e.found(), kCheckpointVersion + 4);
    EXPECT_EQ(e.expected(), kCheckpointVersion);
    EXPECT_NE(std::string(e.what()).find(std::to_string(kCheckpointVersion + 4)), std::string::npos);
  }
}

TEST(Checkpoint, ModelStateSurvivesRoundTrip) {
  auto cfg = quick_config();
  DepthModel model(cfg);
  const auto data = generate_dataset(small_spec(), 1, 3, 4);
  const auto before = model.predict(data.sequences[0].rgb);
  const auto restored_bundle = deserialize_checkpoint(serialize_checkpoint(make_checkpoint(model)));
  auto restored = model_from_checkpoint(restored_bundle);
  const auto after = restored.predict(data.sequences[0].rgb);
  for (std::size_t t = 0; t < before.size(); ++t) EXPECT_TRUE(same_bits(before[t], after[t]));

  auto bad = restored_bundle;
  bad.arrays.pop_back();
  EXPECT_THROW(model_from_checkpoint(bad), FormatError);
}

// ---- data --------------------------------------------------------------------

TEST(Dataset, SplitIsDisjointAndSized) {
  const auto s = split_dataset(200, 0.1, 3);
  EXPECT_EQ(s.validation.size(), 20u);
  EXPECT_EQ(s.train.size(), 180u);
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.validation.begin(), s.validation.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(split_dataset(200, 0.1, 3).validation, s.validation);
  EXPECT_NE(split_dataset(200, 0.1, 4).validation, s.validation);
  EXPECT_EQ(split_dataset(5, 0.0, 1).train.size(), 5u);
}

TEST(Dataset, DiskRoundTripPreservesSamples) {
  const auto data = generate_dataset(small_spec(), 3, 2, 11);
  const auto dir = scratch_dir("dataset");
  save_dataset(data, dir);
  const auto back = load_dataset(dir);
  ASSERT_EQ(back.ids, data.ids);
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t t = 0; t < 2; ++t) {
      EXPECT_TRUE(same_bits(back.sequences[i].rgb[t], data.sequences[i].rgb[t]));
      EXPECT_TRUE(same_bits(back.sequences[i].depth[t], data.sequences[i].depth[t]));
    }
  EXPECT_THROW(load_dataset(dir / "missing"), IoError);
  fs::remove_all(dir);
}

// ---- training ------------------------------------------------------------------

TEST(Training, LogHonorsWarmupAlternationAndTotal) {
  auto cfg = quick_config();
  cfg.epochs = 3;
  const auto data = generate_dataset(small_spec(), 4, 3, 1);
  std::ostringstream log;
  TrainOptions opts;
  opts.step_log = &log;
  const auto r = train(cfg, data, opts);

  std::istringstream in(log.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, StepLog::header());
  std::vector<StepLog> parsed;
  while (std::getline(in, line)) parsed.push_back(StepLog::parse(line));
  ASSERT_EQ(parsed.size(), 6u);
  for (const auto& s : parsed) {
    if (s.epoch <= cfg.warmup_epochs) {
      EXPECT_FALSE(s.discriminator_updated());
      EXPECT_EQ(s.l_temporal, 0.0);
    } else {
      EXPECT_TRUE(s.discriminator_updated());
      EXPECT_GT(s.l_temporal, 0.0);
    }
    EXPECT_NEAR(s.l_total, s.l_spatial + 0.1 * s.l_temporal, 1e-6 * std::max(1.0, s.l_total));
    EXPECT_NEAR(s.l_spatial, s.l_depth + s.l_grad + s.l_normal, 1e-6 * std::max(1.0, s.l_spatial));
  }
  EXPECT_EQ(r.checkpoint.epoch, 3);
  EXPECT_EQ(r.checkpoint.step, 6);
  EXPECT_NE(r.checkpoint.find("sgd.velocity.disc.fc.weight"), nullptr);
  EXPECT_NE(r.checkpoint.find("adam.m.backbone.mff.fuse.conv.weight"), nullptr);
}

TEST(Training, LearningRateDecaysOnSchedule) {
  auto cfg = quick_config();
  cfg.use_gan = false;
  cfg.warmup_epochs = 0;
  cfg.epochs = 5;
  cfg.steps_per_epoch = 1;
  cfg.lr_decay_every = 2;
  const auto r = train(cfg, generate_dataset(small_spec(), 2, 3, 1));
  ASSERT_EQ(r.epochs.size(), 5u);
  EXPECT_DOUBLE_EQ(r.epochs[0].gen_lr, 1e-4);
  EXPECT_DOUBLE_EQ(r.epochs[1].gen_lr, 1e-4);
  EXPECT_NEAR(r.epochs[2].gen_lr, 1e-5, 1e-18);
  EXPECT_NEAR(r.epochs[4].gen_lr, 1e-6, 1e-18);
}

TEST(Training, SameSeedSameTrajectory) {
  auto cfg = quick_config();
  const auto data = generate_dataset(small_spec(), 4, 3, 2);
  const auto a = train(cfg, data);
  const auto b = train(cfg, data);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) EXPECT_EQ(a.steps[i].to_line(), b.steps[i].to_line());
  EXPECT_EQ(a.checkpoint, b.checkpoint);
  cfg.seed = 6;
  EXPECT_NE(train(cfg, data).steps[0].to_line(), a.steps[0].to_line());
}

TEST(Training, OverfitsOneBatch) {
  TrainConfig cfg;
  cfg.use_gan = false;
  cfg.warmup_epochs = 0;
  cfg.epochs = 1;
  cfg.steps_per_epoch = 200;
  cfg.n_frames = 3;
  cfg.batch_sequences = 4;
  cfg.augment = false;
  cfg.val_fraction = 0.0;
  cfg.validate_each_epoch = false;
  cfg.gen_lr = 1e-3;
  // One object at 64x64: with sharp occlusion edges and a stride-4 output the
  // best reachable loss grows with edge density, so a sparse scene is used.
  SceneSpec spec = small_spec(64);
  spec.n_objects = 1;
  const auto r = train(cfg, generate_dataset(spec, 4, 3, 8));
  const double first = r.steps.front().l_spatial;
  double last = 0;
  for (std::size_t i = r.steps.size() - 5; i < r.steps.size(); ++i) last += r.steps[i].l_spatial / 5;
  EXPECT_LT(last, 0.2 * first) << "first " << first << " last " << last;
}

TEST(Training, DivergenceKeepsLastFiniteState) {
  auto cfg = quick_config();
  cfg.use_gan = false;
  cfg.warmup_epochs = 0;
  cfg.epochs = 4;
  cfg.gen_lr = 1e30;
  const auto dir = scratch_dir("diverge");
  TrainOptions opts;
  opts.divergence_checkpoint = dir / "last.ckpt";
  try {
    train(cfg, generate_dataset(small_spec(), 2, 3, 1), opts);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("last.ckpt"), std::string::npos);
    const auto saved = load_checkpoint(dir / "last.ckpt");
    EXPECT_EQ(saved, e.last_finite);
    for (const auto& a : saved.arrays)
      for (float v : a.value.values()) ASSERT_TRUE(std::isfinite(v)) << a.name;
  }
  fs::remove_all(dir);
}

TEST(Training, RejectsUnusableData) {
  auto cfg = quick_config();
  EXPECT_THROW(train(cfg, Dataset{}), PreconditionError);
  EXPECT_THROW(train(cfg, generate_dataset(small_spec(), 2, 2, 1)), PreconditionError);
}

// ---- evaluation ------------------------------------------------------------------

TEST(Evaluation, GroundTruthPredictorIsPerfect) {
  const auto data = generate_dataset(small_spec(), 2, 5, 3);
  std::vector<const DepthSequenceSample*> seqs{&data.sequences[0], &data.sequences[1]};
  EvalOptions opts;
  opts.window = 4;
  const auto r = evaluate_predictor([](const DepthSequenceSample& s) { return s.depth; }, seqs, opts);
  EXPECT_EQ(r.rel, 0.0);
  EXPECT_EQ(r.delta1, 1.0);
  EXPECT_NEAR(r.tcc, 1.0, 1e-12);
  EXPECT_NEAR(r.tmc, 1.0, 1e-12);
  EXPECT_EQ(r.n_pixels, 2u * 5 * 32 * 32);
}

TEST(Evaluation, ConstantPredictorMatchesClosedForm) {
  const auto data = generate_dataset(small_spec(), 2, 3, 4);
  const float c = 3.0f;
  double sum = 0;
  std::size_t n = 0;
  for (const auto& s : data.sequences)
    for (std::size_t t = 0; t < s.size(); ++t)
      for (std::size_t i = 0; i < s.depth[t].size(); ++i)
        if (s.valid_mask[t][i]) {
          sum += std::abs(c - static_cast<double>(s.depth[t][i])) / s.depth[t][i];
          ++n;
        }
  std::vector<const DepthSequenceSample*> seqs{&data.sequences[0], &data.sequences[1]};
  const auto r = evaluate_predictor(
      [&](const DepthSequenceSample& s) {
        return std::vector<Tensor<float>>(s.size(), Tensor<float>(s.depth[0].shape(), c));
      },
      seqs);
  EXPECT_NEAR(r.rel, sum / static_cast<double>(n), 1e-12);
}

TEST(Evaluation, RepeatableAndWindowed) {
  auto cfg = quick_config();
  DepthModel model(cfg);
  const auto data = generate_dataset(small_spec(), 2, 6, 5);
  EvalOptions opts;
  opts.window = 4;
  const auto a = evaluate(model, data, {0, 1}, opts);
  const auto b = evaluate(model, data, {0, 1}, opts);
  EXPECT_EQ(a.to_text(), b.to_text());
  EXPECT_EQ(a.n_pixels, 2u * 6 * 32 * 32);

  std::size_t calls = 0;
  std::vector<std::size_t> lengths;
  std::vector<const DepthSequenceSample*> seqs{&data.sequences[0]};
  evaluate_predictor(
      [&](const DepthSequenceSample& s) {
        ++calls;
        lengths.push_back(s.size());
        return s.depth;
      },
      seqs, opts);
  EXPECT_EQ(lengths, (std::vector<std::size_t>{4, 2}));
}

TEST(Evaluation, CheckpointOnDisk) {
  auto cfg = quick_config();
  DepthModel model(cfg);
  const auto data = generate_dataset(small_spec(), 2, 4, 6);
  const auto dir = scratch_dir("eval");
  save_dataset(data, dir / "data");
  const auto bundle = make_checkpoint(model);
  const auto on_disk = evaluate(bundle, dir / "data", 4);
  EvalOptions opts;
  opts.window = 4;
  EXPECT_EQ(on_disk.to_text(), evaluate(model, data, {0, 1}, opts).to_text());
  fs::remove_all(dir);
}

// ---- inference -----------------------------------------------------------------

TEST(Inference, ModesAgreeBitForBit) {
  for (bool use_clstm : {true, false}) {
    auto cfg = quick_config();
    cfg.use_clstm = use_clstm;
    DepthModel model(cfg);
    const auto seq = generate_synthetic_sequence(small_spec(), 9, 2);
    const auto serial = run_inference(model, seq.rgb, InferenceMode::Serial);
    InferenceOptions opts;
    opts.chunk = 4;
    for (std::size_t workers : {1, 3}) {
      opts.workers = workers;
      const auto ps = run_inference(model, seq.rgb, InferenceMode::ParallelSpatial, opts);
      ASSERT_EQ(ps.size(), serial.size());
      for (std::size_t t = 0; t < ps.size(); ++t) EXPECT_TRUE(same_bits(ps[t], serial[t])) << t;
    }
    const auto batch = model.predict(seq.rgb);
    for (std::size_t t = 0; t < batch.size(); ++t) EXPECT_TRUE(same_bits(batch[t], serial[t])) << t;
  }
}

TEST(Inference, BenchmarkReportArithmetic) {
  auto cfg = quick_config();
  DepthModel model(cfg);
  const auto seq = generate_synthetic_sequence(small_spec(16), 3, 2);
  std::vector<Tensor<float>> frames;
  for (int i = 0; i < 40; ++i) frames.push_back(seq.rgb[i % 3]);
  BenchOptions opts;
  opts.warmup = 5;
  EXPECT_THROW(benchmark(model, frames, InferenceMode::Serial, opts), PreconditionError);
  for (int i = 0; i < 70; ++i) frames.push_back(seq.rgb[i % 3]);
  std::vector<Tensor<float>> out;
  const auto r = benchmark(model, frames, InferenceMode::ParallelSpatial, opts, &out);
  EXPECT_EQ(r.n_frames_timed, 105u);
  EXPECT_EQ(r.warmup_frames, 5u);
  EXPECT_EQ(out.size(), frames.size());
  EXPECT_NEAR(r.fps * r.ms_per_frame, 1000.0, 1e-9);
  EXPECT_GT(r.first_frame_latency_ms, 0.0);
  EXPECT_NE(r.to_text().find("mode=ps_mode"), std::string::npos);
  EXPECT_EQ(parse_mode("s_mode"), InferenceMode::Serial);
  EXPECT_THROW(parse_mode("turbo"), PreconditionError);
}

TEST(Inference, ColormapEndpoints) {
  const auto lo = viridis(0.0), hi = viridis(1.0);
  EXPECT_FLOAT_EQ(lo[0], 0.267004f);
  EXPECT_FLOAT_EQ(hi[1], 0.906157f);
  Tensor<float> d({1, 3});
  d[0] = 2.0f;
  d[1] = 5.0f;
  d[2] = 3.5f;
  const auto c = colorize_depth(d, 2.0, 5.0);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    EXPECT_FLOAT_EQ(c[ch * 3 + 0], lo[ch]);
    EXPECT_FLOAT_EQ(c[ch * 3 + 1], hi[ch]);
    EXPECT_FLOAT_EQ(c[ch * 3 + 2], viridis(0.5)[ch]);
  }
}

TEST(Inference, PredictDirectoryWritesDatasetLayout) {
  auto cfg = quick_config();
  DepthModel model(cfg);
  const auto data = generate_dataset(small_spec(), 2, 3, 9);
  const auto dir = scratch_dir("predict");
  save_dataset(data, dir / "in");
  const auto summary = predict_directory(model, dir / "in", dir / "out", true);
  EXPECT_EQ(summary.sequences, 2u);
  EXPECT_EQ(summary.frames, 6u);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& id = data.ids[i];
    EXPECT_EQ(sequence_length(dir / "out", id), 3u);
    const auto loaded = load_sequence(dir / "out", id, 0, 3);
    const auto want = model.predict(data.sequences[i].rgb);
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t p = 0; p < want[t].size(); ++p)
        ASSERT_LE(std::abs(loaded.depth[t][p] - want[t][p]), 0.0005f + 1e-6f);
      EXPECT_TRUE(fs::exists(dir / "out" / id / "colormap" / frame_filename(t)));
    }
  }
  EXPECT_THROW(predict_directory(model, dir / "nothing", dir / "out2", false), IoError);
  fs::remove_all(dir);
}
