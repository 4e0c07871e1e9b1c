#include "vdepth/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "vdepth/error.hpp"

namespace vdepth {

void TrainConfig::validate() const {
  VDEPTH_REQUIRE(preset == "tiny" || preset == "small", "train config: preset must be tiny or small, got " + preset);
  VDEPTH_REQUIRE(epochs >= 1, "train config: epochs must be >= 1");
  VDEPTH_REQUIRE(n_frames >= 1, "train config: n_frames must be >= 1");
  VDEPTH_REQUIRE(warmup_epochs < epochs, "train config: warmup_epochs must be < epochs");
  VDEPTH_REQUIRE(batch_sequences >= 1, "train config: batch_sequences must be >= 1");
  VDEPTH_REQUIRE(gen_lr > 0.0 && disc_lr > 0.0, "train config: learning rates must be positive");
  VDEPTH_REQUIRE(lr_decay > 0.0 && lr_decay <= 1.0 && lr_decay_every >= 1, "train config: invalid lr decay");
  VDEPTH_REQUIRE(weight_decay >= 0.0, "train config: weight_decay must be >= 0");
  VDEPTH_REQUIRE(disc_momentum >= 0.0 && disc_momentum < 1.0, "train config: disc_momentum must be in [0, 1)");
  VDEPTH_REQUIRE(val_fraction >= 0.0 && val_fraction < 1.0, "train config: val_fraction must be in [0, 1)");
  VDEPTH_REQUIRE(eval_frames >= 2, "train config: eval_frames must be >= 2");
  VDEPTH_REQUIRE(alpha >= 0.0, "train config: alpha must be >= 0");
  VDEPTH_REQUIRE(mix_prob >= 0.0 && mix_prob <= 1.0, "train config: mix_prob must be in [0, 1]");
  VDEPTH_REQUIRE(!use_gan || n_frames >= 2, "train config: the discriminator needs n_frames >= 2");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  VDEPTH_REQUIRE(ec == std::errc() && p == v.data() + v.size(), "config: " + key + " expects an integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw PreconditionError("config: " + key + " expects a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw PreconditionError("config: " + key + " expects true or false, got '" + v + "'");
}

class Reader {
 public:
  Reader(const ConfigMap& map, std::set<std::string>* used) : map_(map), used_(used) {}

  const std::string* find(const std::string& key) {
    const auto it = map_.find(key);
    if (it == map_.end()) return nullptr;
    if (used_) used_->insert(key);
    return &it->second;
  }
  template <typename Int>
    requires std::is_integral_v<Int> && (!std::is_same_v<Int, bool>)
  void get(const std::string& key, Int& out) {
    if (auto* v = find(key)) out = parse_int<Int>(key, *v);
  }
  void get(const std::string& key, double& out) {
    if (auto* v = find(key)) out = parse_real(key, *v);
  }
  void get(const std::string& key, bool& out) {
    if (auto* v = find(key)) out = parse_bool(key, *v);
  }
  void get(const std::string& key, std::string& out) {
    if (auto* v = find(key)) out = *v;
  }

 private:
  const ConfigMap& map_;
  std::set<std::string>* used_;
};

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw FormatError("config line " + std::to_string(lineno) + ": empty key");
    out[key] = value;
  }
  return out;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

void apply_config(const ConfigMap& map, TrainConfig& c, std::set<std::string>* used) {
  Reader r(map, used);
  r.get("preset", c.preset);
  r.get("epochs", c.epochs);
  r.get("gen_lr", c.gen_lr);
  r.get("lr_decay", c.lr_decay);
  r.get("lr_decay_every", c.lr_decay_every);
  r.get("weight_decay", c.weight_decay);
  r.get("disc_lr", c.disc_lr);
  r.get("disc_momentum", c.disc_momentum);
  r.get("warmup_epochs", c.warmup_epochs);
  r.get("n_frames", c.n_frames);
  r.get("batch_sequences", c.batch_sequences);
  r.get("steps_per_epoch", c.steps_per_epoch);
  r.get("seed", c.seed);
  r.get("use_clstm", c.use_clstm);
  r.get("use_gan", c.use_gan);
  r.get("augment", c.augment);
  r.get("val_fraction", c.val_fraction);
  r.get("eval_frames", c.eval_frames);
  r.get("validate_each_epoch", c.validate_each_epoch);
  r.get("alpha", c.alpha);
  r.get("mix_prob", c.mix_prob);
}

void apply_config(const ConfigMap& map, SceneSpec& s, std::set<std::string>* used) {
  Reader r(map, used);
  r.get("n_objects", s.n_objects);
  r.get("min_depth", s.min_depth);
  r.get("max_depth", s.max_depth);
  r.get("motion_amplitude", s.motion_amplitude);
  r.get("height", s.height);
  r.get("width", s.width);
  r.get("camera_pan_x", s.camera_pan[0]);
  r.get("camera_pan_y", s.camera_pan[1]);
  r.get("background_depth", s.background_depth);
  r.get("rgb_noise", s.rgb_noise);
}

ConfigMap to_config_map(const TrainConfig& c) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {{"preset", c.preset},
          {"epochs", std::to_string(c.epochs)},
          {"gen_lr", fmt(c.gen_lr)},
          {"lr_decay", fmt(c.lr_decay)},
          {"lr_decay_every", std::to_string(c.lr_decay_every)},
          {"weight_decay", fmt(c.weight_decay)},
          {"disc_lr", fmt(c.disc_lr)},
          {"disc_momentum", fmt(c.disc_momentum)},
          {"warmup_epochs", std::to_string(c.warmup_epochs)},
          {"n_frames", std::to_string(c.n_frames)},
          {"batch_sequences", std::to_string(c.batch_sequences)},
          {"steps_per_epoch", std::to_string(c.steps_per_epoch)},
          {"seed", std::to_string(c.seed)},
          {"use_clstm", b(c.use_clstm)},
          {"use_gan", b(c.use_gan)},
          {"augment", b(c.augment)},
          {"val_fraction", fmt(c.val_fraction)},
          {"eval_frames", std::to_string(c.eval_frames)},
          {"validate_each_epoch", b(c.validate_each_epoch)},
          {"alpha", fmt(c.alpha)},
          {"mix_prob", fmt(c.mix_prob)}};
}

ConfigMap to_config_map(const SceneSpec& s) {
  return {{"n_objects", std::to_string(s.n_objects)},
          {"min_depth", fmt(s.min_depth)},
          {"max_depth", fmt(s.max_depth)},
          {"motion_amplitude", fmt(s.motion_amplitude)},
          {"height", std::to_string(s.height)},
          {"width", std::to_string(s.width)},
          {"camera_pan_x", fmt(s.camera_pan[0])},
          {"camera_pan_y", fmt(s.camera_pan[1])},
          {"background_depth", fmt(s.background_depth)},
          {"rgb_noise", fmt(s.rgb_noise)}};
}

std::string format_config(const ConfigMap& map) {
  std::string out;
  for (const auto& [k, v] : map) out += k + " = " + v + "\n";
  return out;
}

}  // namespace vdepth
