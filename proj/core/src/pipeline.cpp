#include "vdepth/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "vdepth/losses.hpp"
#include "vdepth/optim.hpp"

namespace vdepth {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// ---- model -----------------------------------------------------------------

DepthModel::DepthModel(const TrainConfig& config) : config_(config) {
  config_.validate();
  const auto bcfg = BackboneConfig::from_preset(config_.preset);
  backbone = Backbone<float>(bcfg, derive_seed(config_.seed, 1));
  head_config_.feature_channels = bcfg.feature_channels;
  if (config_.use_clstm)
    clstm = ConvLstm<float>(head_config_, derive_seed(config_.seed, 2));
  else
    head = BaselineHead<float>(head_config_, derive_seed(config_.seed, 3));
  if (config_.use_gan) {
    DiscriminatorConfig dcfg;
    dcfg.mix_prob = config_.mix_prob;
    discriminator = Discriminator<float>(dcfg, derive_seed(config_.seed, 4));
  }
}

Var<float> DepthModel::forward(const Var<float>& frames, std::size_t time_steps, bool training) {
  VDEPTH_REQUIRE(frames.value().rank() == 4 && frames.dim(1) == 3,
                 "DepthModel: expected frames [T*B,3,H,W], got " + shape_to_string(frames.shape()));
  VDEPTH_REQUIRE(time_steps >= 1 && frames.dim(0) % time_steps == 0,
                 "DepthModel: frame count must be a multiple of the sequence length");
  const std::size_t batch = frames.dim(0) / time_steps;
  const std::size_t h = frames.dim(2), w = frames.dim(3);
  const auto features = backbone.forward(frames, training);
  if (!config_.use_clstm) return depth_from_logits(head.logits(features), h, w, head_config_.d_min);
  std::vector<Var<float>> per_step;
  for (std::size_t t = 0; t < time_steps; ++t) per_step.push_back(ops::slice(features, 0, t * batch, batch));
  const auto depths = clstm.run_sequence(per_step, h, w);
  return ops::concat<float>(depths, 0);
}

std::vector<Tensor<float>> DepthModel::predict(const std::vector<Tensor<float>>& rgb) {
  VDEPTH_REQUIRE(!rgb.empty(), "DepthModel::predict: empty sequence");
  NoGradGuard guard;
  const std::size_t h = rgb[0].dim(1), w = rgb[0].dim(2), plane = 3 * h * w;
  Tensor<float> stacked({rgb.size(), 3, h, w});
  for (std::size_t t = 0; t < rgb.size(); ++t) {
    VDEPTH_REQUIRE(rgb[t].shape() == rgb[0].shape(), "DepthModel::predict: frame shapes differ");
    std::copy_n(rgb[t].data(), plane, stacked.data() + t * plane);
  }
  const auto depth = forward(Var<float>(stacked), rgb.size(), false);
  std::vector<Tensor<float>> out;
  for (std::size_t t = 0; t < rgb.size(); ++t) {
    Tensor<float> d({h, w});
    std::copy_n(depth.value().data() + t * h * w, h * w, d.data());
    out.push_back(std::move(d));
  }
  return out;
}

nn::ParameterRefs<float> DepthModel::generator_refs() {
  nn::ParameterRefs<float> refs;
  backbone.collect(refs, "backbone.");
  if (config_.use_clstm)
    clstm.collect(refs, "clstm.");
  else
    head.collect(refs, "head.");
  return refs;
}

nn::ParameterRefs<float> DepthModel::discriminator_refs() {
  nn::ParameterRefs<float> refs;
  if (config_.use_gan) discriminator.collect(refs, "disc.");
  return refs;
}

CheckpointBundle make_checkpoint(DepthModel& model) {
  CheckpointBundle b;
  b.config = to_config_map(model.config());
  for (const auto& refs : {model.generator_refs(), model.discriminator_refs()}) {
    for (const auto& [name, v] : refs.params) b.arrays.push_back({name, v->value()});
    for (const auto& [name, t] : refs.buffers) b.arrays.push_back({name, *t});
  }
  return b;
}

void load_model_state(DepthModel& model, const CheckpointBundle& bundle) {
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor<float>& {
    const auto* a = bundle.find(name);
    if (!a) throw FormatError("checkpoint lacks array " + name);
    if (a->value.shape() != shape)
      throw FormatError("checkpoint array " + name + " has shape " + shape_to_string(a->value.shape()) +
                        ", model expects " + shape_to_string(shape));
    return a->value;
  };
  for (auto refs : {model.generator_refs(), model.discriminator_refs()}) {
    for (auto& [name, v] : refs.params) v->mutable_value() = fetch(name, v->shape());
    for (auto& [name, t] : refs.buffers) *t = fetch(name, t->shape());
  }
}

DepthModel model_from_checkpoint(const CheckpointBundle& bundle) {
  TrainConfig cfg;
  apply_config(bundle.config, cfg);
  DepthModel model(cfg);
  load_model_state(model, bundle);
  return model;
}

// ---- data ------------------------------------------------------------------

Dataset generate_dataset(const SceneSpec& spec, std::size_t n_sequences, std::size_t n_frames, std::uint64_t seed) {
  VDEPTH_REQUIRE(n_sequences >= 1 && n_frames >= 1, "generate_dataset: need at least one sequence and frame");
  Dataset d;
  for (std::size_t i = 0; i < n_sequences; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "seq_%05zu", i);
    d.ids.emplace_back(id);
    d.sequences.push_back(generate_synthetic_sequence(spec, n_frames, derive_seed(seed, i)));
  }
  return d;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& root) {
  for (std::size_t i = 0; i < dataset.size(); ++i) save_sequence(dataset.sequences[i], root, dataset.ids[i]);
}

Dataset load_dataset(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw IoError("dataset root " + root.string() + " does not exist");
  Dataset d;
  d.ids = list_sequences(root);
  if (d.ids.empty()) throw IoError("no sequences under " + root.string());
  for (const auto& id : d.ids) d.sequences.push_back(load_sequence(root, id, 0, sequence_length(root, id)));
  return d;
}

DatasetSplit split_dataset(std::size_t n, double val_fraction, std::uint64_t seed) {
  VDEPTH_REQUIRE(val_fraction >= 0.0 && val_fraction < 1.0, "split_dataset: val_fraction must be in [0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(n)));
  if (n_val >= n) n_val = n > 0 ? n - 1 : 0;
  DatasetSplit s;
  s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

// ---- logs ------------------------------------------------------------------

bool StepLog::discriminator_updated() const { return !std::isnan(d_loss); }

std::string StepLog::header() { return "epoch\tstep\tl_depth\tl_grad\tl_normal\tl_spatial\tl_temporal\tl_total\td_loss"; }

std::string StepLog::to_line() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%zu\t%zu\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g", epoch, step, l_depth, l_grad,
                l_normal, l_spatial, l_temporal, l_total, d_loss);
  return buf;
}

StepLog StepLog::parse(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, '\t');) f.push_back(cell);
  if (f.size() != 9) throw FormatError("training log: expected 9 fields, got " + std::to_string(f.size()));
  StepLog s;
  try {
    s.epoch = std::stoul(f[0]);
    s.step = std::stoul(f[1]);
    double* dst[] = {&s.l_depth, &s.l_grad, &s.l_normal, &s.l_spatial, &s.l_temporal, &s.l_total, &s.d_loss};
    for (std::size_t i = 0; i < 7; ++i) *dst[i] = std::strtod(f[i + 2].c_str(), nullptr);
  } catch (const std::exception&) {
    throw FormatError("training log: malformed line '" + line + "'");
  }
  return s;
}

std::string EpochSummary::to_line() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "epoch=%zu\tgen_lr=%.6g\tmean_spatial=%.9g\tmean_total=%.9g", epoch, gen_lr,
                mean_spatial, mean_total);
  std::string out = buf;
  if (validation) {
    std::istringstream text(validation->to_text());
    for (std::string kv; std::getline(text, kv);) out += "\tval_" + kv;
  }
  return out;
}

// ---- training --------------------------------------------------------------

namespace {

struct Batch {
  Tensor<float> rgb, depth, mask_f;
  Mask mask;
};

Batch assemble(const std::vector<DepthSequenceSample>& windows) {
  const std::size_t b_count = windows.size(), steps = windows[0].size();
  const std::size_t h = windows[0].height(), w = windows[0].width(), hw = h * w;
  Batch b{Tensor<float>({steps * b_count, 3, h, w}), Tensor<float>({steps * b_count, 1, h, w}),
          Tensor<float>({steps * b_count, 1, h, w}), Mask({steps * b_count, 1, h, w})};
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t s = 0; s < b_count; ++s) {
      const std::size_t row = t * b_count + s;
      const auto& win = windows[s];
      std::copy_n(win.rgb[t].data(), 3 * hw, b.rgb.data() + row * 3 * hw);
      for (std::size_t i = 0; i < hw; ++i) {
        const bool valid = win.valid_mask[t][i] != 0;
        b.mask[row * hw + i] = valid;
        b.mask_f[row * hw + i] = valid ? 1.0f : 0.0f;
        b.depth[row * hw + i] = valid ? win.depth[t][i] : 0.0f;
      }
    }
  return b;
}

CheckpointBundle full_checkpoint(DepthModel& model, optim::Adam& adam, optim::Sgd* sgd, std::size_t epoch,
                                 std::size_t step) {
  auto b = make_checkpoint(model);
  b.epoch = static_cast<std::int64_t>(epoch);
  b.step = static_cast<std::int64_t>(step);
  b.gen_optimizer_steps = adam.steps();
  const auto gen = model.generator_refs();
  for (std::size_t i = 0; i < gen.params.size() && i < adam.first_moments().size(); ++i) {
    b.arrays.push_back({"adam.m." + gen.params[i].first, adam.first_moments()[i]});
    b.arrays.push_back({"adam.v." + gen.params[i].first, adam.second_moments()[i]});
  }
  if (sgd) {
    const auto disc = model.discriminator_refs();
    for (std::size_t i = 0; i < disc.params.size() && i < sgd->velocities().size(); ++i)
      b.arrays.push_back({"sgd.velocity." + disc.params[i].first, sgd->velocities()[i]});
  }
  return b;
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& data, const TrainOptions& options) {
  config.validate();
  VDEPTH_REQUIRE(!data.empty(), "train: empty dataset");
  const std::size_t steps_t = config.n_frames, batch_n = config.batch_sequences;
  const std::size_t h = data.sequences[0].height(), w = data.sequences[0].width();
  for (const auto& s : data.sequences) {
    VDEPTH_REQUIRE(s.size() >= steps_t, "train: every sequence needs at least n_frames frames");
    VDEPTH_REQUIRE(s.height() == h && s.width() == w, "train: all sequences must share one resolution");
  }

  DepthModel model(config);
  auto gen = model.generator_refs();
  auto disc = model.discriminator_refs();
  optim::Adam adam(gen.vars(), {config.gen_lr, 0.9, 0.999, 1e-8, config.weight_decay});
  std::optional<optim::Sgd> sgd;
  if (config.use_gan) sgd.emplace(disc.vars(), optim::Sgd::Options{config.disc_lr, config.disc_momentum, 0.0});

  TrainResult result;
  result.split = split_dataset(data.size(), config.val_fraction, derive_seed(config.seed, 10));
  const auto& train_idx = result.split.train;
  VDEPTH_REQUIRE(!train_idx.empty(), "train: the training split is empty");
  const std::size_t steps_per_epoch =
      config.steps_per_epoch ? config.steps_per_epoch : (train_idx.size() + batch_n - 1) / batch_n;

  SpatialLossConfig loss_cfg;
  loss_cfg.alpha = config.alpha;
  const double max_depth = model.discriminator.config().max_depth;

  if (options.step_log) *options.step_log << StepLog::header() << '\n';
  CheckpointBundle last_finite = full_checkpoint(model, adam, sgd ? &*sgd : nullptr, 0, 0);
  std::size_t global_step = 0;

  auto diverge = [&](const std::string& what, std::size_t epoch) {
    std::string msg = "training diverged at epoch " + std::to_string(epoch) + ", step " +
                      std::to_string(global_step) + ": " + what;
    if (!options.divergence_checkpoint.empty()) {
      save_checkpoint(last_finite, options.divergence_checkpoint);
      msg += "; last finite state (epoch " + std::to_string(last_finite.epoch) + ") saved to " +
             options.divergence_checkpoint.string();
    }
    throw TrainingDiverged(msg, last_finite);
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.gen_lr * std::pow(config.lr_decay, static_cast<double>(epoch / config.lr_decay_every));
    adam.set_lr(lr);
    const bool adversarial = config.use_gan && epoch >= config.warmup_epochs;

    std::mt19937_64 rng(derive_seed(config.seed, 1000 + epoch));
    std::vector<std::size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), rng);

    EpochSummary summary;
    summary.epoch = epoch + 1;
    summary.gen_lr = lr;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      ++global_step;
      std::vector<DepthSequenceSample> windows;
      for (std::size_t b = 0; b < batch_n; ++b) {
        const auto& seq = data.sequences[order[(s * batch_n + b) % order.size()]];
        const std::size_t span = seq.size() - steps_t;
        const std::size_t start = span ? std::uniform_int_distribution<std::size_t>(0, span)(rng) : 0;
        auto win = seq.window(start, steps_t);
        const std::uint64_t aug_seed = rng();
        windows.push_back(config.augment ? augment(win, aug_seed) : std::move(win));
      }
      const Batch batch = assemble(windows);

      // Generator update.
      StepLog log;
      log.epoch = epoch + 1;
      log.step = global_step;
      gen.zero_grad();
      disc.zero_grad();
      const Var<float> rgb(batch.rgb);
      const auto depth = model.forward(rgb, steps_t, true);
      const auto terms = spatial_loss_terms(depth, batch.depth, batch.mask, loss_cfg);
      Var<float> total = terms.spatial;
      if (adversarial) {
        const auto clips = make_rgbd_clips(rgb, ops::mul(depth, Var<float>(batch.mask_f)), steps_t, max_depth);
        const auto temporal = generator_temporal_loss(model.discriminator.logits(clips, true));
        total = total_loss(terms.spatial, temporal, loss_cfg);
        log.l_temporal = temporal.item();
      }
      log.l_depth = terms.depth.item();
      log.l_grad = terms.grad.item();
      log.l_normal = terms.normal.item();
      log.l_spatial = terms.spatial.item();
      log.l_total = total.item();
      log.d_loss = std::nan("");
      if (!finite(log.l_total)) diverge("non-finite generator loss", epoch + 1);
      total.backward();
      adam.step();

      // Discriminator update on real clips and mixed fake clips.
      if (adversarial) {
        disc.zero_grad();
        Tensor<float> fake = depth.value();
        for (std::size_t i = 0; i < fake.size(); ++i) fake[i] *= batch.mask_f[i];
        fake = mix_ground_truth(fake, batch.depth, config.mix_prob, derive_seed(config.seed, 1u << 20 | global_step));
        const Var<float> real_clips = make_rgbd_clips(rgb, Var<float>(batch.depth), steps_t, max_depth);
        const Var<float> fake_clips = make_rgbd_clips(rgb, Var<float>(fake), steps_t, max_depth);
        const std::array<Var<float>, 2> both{real_clips, fake_clips};
        const auto logits = model.discriminator.logits(ops::concat<float>(both, 0), true);
        const auto d_loss = discriminator_loss(ops::slice(logits, 0, 0, batch_n), ops::slice(logits, 0, batch_n, batch_n));
        log.d_loss = d_loss.item();
        if (!finite(log.d_loss)) diverge("non-finite discriminator loss", epoch + 1);
        d_loss.backward();
        sgd->step();
      }

      summary.mean_spatial += log.l_spatial / static_cast<double>(steps_per_epoch);
      summary.mean_total += log.l_total / static_cast<double>(steps_per_epoch);
      if (options.step_log) *options.step_log << log.to_line() << '\n' << std::flush;
      result.steps.push_back(log);
    }

    if (config.validate_each_epoch && !result.split.validation.empty()) {
      EvalOptions eval;
      eval.window = config.eval_frames;
      summary.validation = evaluate(model, data, result.split.validation, eval);
    }
    if (options.epoch_log) *options.epoch_log << summary.to_line() << '\n' << std::flush;
    result.epochs.push_back(summary);
    last_finite = full_checkpoint(model, adam, sgd ? &*sgd : nullptr, epoch + 1, global_step);
  }
  result.checkpoint = std::move(last_finite);
  return result;
}

TrainResult train(const TrainConfig& config, const std::filesystem::path& dataset_root, const TrainOptions& options) {
  config.validate();
  return train(config, load_dataset(dataset_root), options);
}

// ---- evaluation ------------------------------------------------------------

namespace {

std::vector<Tensor<double>> to_double(const std::vector<Tensor<float>>& xs) {
  std::vector<Tensor<double>> out;
  for (const auto& x : xs) out.push_back(x.cast<double>());
  return out;
}

}  // namespace

MetricReport evaluate_predictor(const SequencePredictor& predict, const std::vector<const DepthSequenceSample*>& seqs,
                                const EvalOptions& options) {
  VDEPTH_REQUIRE(!seqs.empty(), "evaluate: no sequences");
  VDEPTH_REQUIRE(options.window >= 2, "evaluate: window must be >= 2 frames");
  SpatialAccumulator acc;
  double tcc_sum = 0.0, tmc_sum = 0.0;
  std::size_t windows = 0;
  for (const auto* seq : seqs) {
    for (std::size_t start = 0; start < seq->size(); start += options.window) {
      const std::size_t n = std::min(options.window, seq->size() - start);
      const auto win = seq->window(start, n);
      const auto pred = predict(win);
      VDEPTH_REQUIRE(pred.size() == n, "evaluate: predictor returned the wrong number of frames");
      for (std::size_t t = 0; t < n; ++t) acc.add(pred[t], win.depth[t], win.valid_mask[t]);
      if (n < 2) continue;
      const auto pd = to_double(pred), gd = to_double(win.depth);
      tcc_sum += tcc(pd, gd, win.valid_mask, options.temporal);
      if (options.compute_tmc) tmc_sum += tmc(pd, gd, options.temporal);
      ++windows;
    }
  }
  const auto m = acc.result();
  MetricReport r;
  r.rel = m.rel;
  r.rms = m.rms;
  r.log10 = m.log10;
  r.delta1 = m.delta1;
  r.delta2 = m.delta2;
  r.delta3 = m.delta3;
  r.n_pixels = m.n_pixels;
  r.n_sequences = seqs.size();
  const double nan = std::nan("");
  r.tcc = windows ? tcc_sum / static_cast<double>(windows) : nan;
  r.tmc = windows && options.compute_tmc ? tmc_sum / static_cast<double>(windows) : nan;
  return r;
}

MetricReport evaluate(DepthModel& model, const Dataset& data, const std::vector<std::size_t>& indices,
                      const EvalOptions& options) {
  std::vector<const DepthSequenceSample*> seqs;
  for (auto i : indices) {
    VDEPTH_REQUIRE(i < data.size(), "evaluate: sequence index out of range");
    seqs.push_back(&data.sequences[i]);
  }
  return evaluate_predictor([&](const DepthSequenceSample& s) { return model.predict(s.rgb); }, seqs, options);
}

MetricReport evaluate(const CheckpointBundle& checkpoint, const std::filesystem::path& dataset_root,
                      std::size_t n_frames_eval) {
  auto model = model_from_checkpoint(checkpoint);
  const auto data = load_dataset(dataset_root);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  EvalOptions options;
  options.window = n_frames_eval;
  return evaluate(model, data, all, options);
}

}  // namespace vdepth
