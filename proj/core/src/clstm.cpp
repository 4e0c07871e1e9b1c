#include "vdepth/clstm.hpp"

#include <cmath>

#include "vdepth/error.hpp"

namespace vdepth {

void ClstmConfig::validate() const {
  VDEPTH_REQUIRE(feature_channels >= 1, "ClstmConfig.feature_channels must be positive");
  VDEPTH_REQUIRE(compressed_channels >= 1, "ClstmConfig.compressed_channels must be positive");
  VDEPTH_REQUIRE(refine_channels >= 1, "ClstmConfig.refine_channels must be positive");
  VDEPTH_REQUIRE(d_min > 0.0 && std::isfinite(d_min), "ClstmConfig.d_min must be positive");
  VDEPTH_REQUIRE(init_depth > d_min && std::isfinite(init_depth), "ClstmConfig.init_depth must exceed d_min");
}

double softplus_inverse(double y) {
  VDEPTH_REQUIRE(y > 0.0, "softplus_inverse needs a positive argument");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

template <typename T>
Var<T> depth_from_logits(const Var<T>& logits, std::size_t out_h, std::size_t out_w, double d_min) {
  Var<T> d = ops::add_scalar(ops::softplus(logits), static_cast<T>(d_min));
  if (d.dim(2) == out_h && d.dim(3) == out_w) return d;
  return ops::resize_bilinear(d, out_h, out_w);
}

namespace {

template <typename T>
void init_output_bias(nn::Conv2d<T>& conv, const ClstmConfig& config) {
  conv.bias.mutable_value().fill(static_cast<T>(softplus_inverse(config.init_depth - config.d_min)));
}

}  // namespace

template <typename T>
ConvLstm<T>::ConvLstm(const ClstmConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t c = config_.feature_channels, in = c + config_.compressed_channels;
  for (Var<T>* w : {&w_f, &w_i, &w_c, &w_o}) *w = Var<T>(nn::he_normal<T>({c, in, 3, 3}, in * 9, rng), true);
  for (Var<T>* b : {&b_f, &b_i, &b_c, &b_o}) *b = Var<T>(Tensor<T>({c}), true);
  d_prev = nn::Conv2d<T>(c, config_.compressed_channels, 1, 1, 0, rng);
  refine1 = nn::Conv2d<T>::same(2 * c, config_.refine_channels, 3, rng);
  refine2 = nn::Conv2d<T>::same(config_.refine_channels, 1, 3, rng);
  init_output_bias(refine2, config_);
}

template <typename T>
void ConvLstm<T>::check_features(const Var<T>& features) const {
  VDEPTH_REQUIRE(features.value().rank() == 4 && features.dim(1) == config_.feature_channels,
                 "clstm: expected features [B," + std::to_string(config_.feature_channels) + ",h,w], got " +
                     shape_to_string(features.shape()));
}

template <typename T>
Var<T> ConvLstm<T>::compress(const Var<T>& features) const {
  check_features(features);
  return d_prev(features);
}

template <typename T>
ClstmState<T> ConvLstm<T>::initial_state(const Var<T>& first_features) const {
  check_features(first_features);
  const auto& s = first_features.shape();
  return {Var<T>(Tensor<T>({s[0], config_.feature_channels, s[2], s[3]})), compress(first_features)};
}

template <typename T>
Var<T> ConvLstm<T>::gate_preactivations(const Var<T>& features, const Var<T>& prev_compressed) const {
  check_features(features);
  VDEPTH_REQUIRE(prev_compressed.value().rank() == 4 && prev_compressed.dim(0) == features.dim(0) &&
                     prev_compressed.dim(1) == config_.compressed_channels &&
                     prev_compressed.dim(2) == features.dim(2) && prev_compressed.dim(3) == features.dim(3),
                 "clstm: state " + shape_to_string(prev_compressed.shape()) + " does not match features " +
                     shape_to_string(features.shape()));
  const Var<T> inputs[] = {features, prev_compressed};
  const Var<T> weights[] = {w_f, w_i, w_c, w_o};
  const Var<T> biases[] = {b_f, b_i, b_c, b_o};
  return ops::conv2d(ops::concat<T>(inputs, 1), ops::concat<T>(weights, 0), ops::concat<T>(biases, 0), 1, 1);
}

template <typename T>
typename ConvLstm<T>::CellOutput ConvLstm<T>::update(const Var<T>& z, const Var<T>& prev_cell) const {
  const std::size_t c = config_.feature_channels;
  VDEPTH_REQUIRE(z.value().rank() == 4 && z.dim(1) == 4 * c, "clstm: gate pre-activations must have 4c channels");
  VDEPTH_REQUIRE(prev_cell.shape() == (Shape{z.dim(0), c, z.dim(2), z.dim(3)}),
                 "clstm: cell " + shape_to_string(prev_cell.shape()) + " does not match the feature grid");
  const Var<T> forget = ops::sigmoid(ops::slice(z, 1, 0, c));
  const Var<T> input = ops::sigmoid(ops::slice(z, 1, c, c));
  const Var<T> candidate = ops::tanh(ops::slice(z, 1, 2 * c, c));
  const Var<T> output = ops::sigmoid(ops::slice(z, 1, 3 * c, c));
  Var<T> cell = ops::add(ops::mul(forget, prev_cell), ops::mul(input, candidate));
  const Var<T> parts[] = {output, ops::tanh(cell)};
  return {ops::concat<T>(parts, 1), cell};
}

template <typename T>
Var<T> ConvLstm<T>::refine(const Var<T>& refine_input) const {
  return refine2(ops::relu(refine1(refine_input)));
}

template <typename T>
typename ConvLstm<T>::StepResult ConvLstm<T>::step(const Var<T>& features, const ClstmState<T>& state) const {
  const auto out = update(gate_preactivations(features, state.prev_compressed), state.cell);
  return {refine(out.refine_input), {out.cell, compress(features)}};
}

template <typename T>
std::vector<Var<T>> ConvLstm<T>::run_sequence(const std::vector<Var<T>>& features, std::size_t out_h,
                                              std::size_t out_w) const {
  VDEPTH_REQUIRE(!features.empty(), "clstm: empty feature sequence");
  ClstmState<T> state = initial_state(features.front());
  std::vector<Var<T>> depths;
  for (const auto& f : features) {
    auto r = step(f, state);
    depths.push_back(depth_from_logits(r.logits, out_h, out_w, config_.d_min));
    state = std::move(r.state);
  }
  return depths;
}

template <typename T>
void ConvLstm<T>::collect(nn::ParameterRefs<T>& refs, const std::string& prefix) {
  refs.params.emplace_back(prefix + "w_f", &w_f);
  refs.params.emplace_back(prefix + "w_i", &w_i);
  refs.params.emplace_back(prefix + "w_c", &w_c);
  refs.params.emplace_back(prefix + "w_o", &w_o);
  refs.params.emplace_back(prefix + "b_f", &b_f);
  refs.params.emplace_back(prefix + "b_i", &b_i);
  refs.params.emplace_back(prefix + "b_c", &b_c);
  refs.params.emplace_back(prefix + "b_o", &b_o);
  d_prev.collect(refs, prefix + "d_prev");
  refine1.collect(refs, prefix + "refine1");
  refine2.collect(refs, prefix + "refine2");
}

template <typename T>
Tensor<T> ClstmStepper<T>::push(const Tensor<T>& features) {
  NoGradGuard guard;
  const Var<T> f(features);
  if (!state_) state_ = model_->initial_state(f);
  auto r = model_->step(f, *state_);
  state_ = std::move(r.state);
  return r.logits.value();
}

template <typename T>
BaselineHead<T>::BaselineHead(const ClstmConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  conv1 = nn::Conv2d<T>::same(config_.feature_channels, 128, 3, rng);
  conv2 = nn::Conv2d<T>::same(128, 128, 3, rng);
  conv3 = nn::Conv2d<T>::same(128, 1, 3, rng);
  init_output_bias(conv3, config_);
}

template <typename T>
Var<T> BaselineHead<T>::logits(const Var<T>& features) const {
  VDEPTH_REQUIRE(features.value().rank() == 4 && features.dim(1) == config_.feature_channels,
                 "baseline head: expected features [N," + std::to_string(config_.feature_channels) + ",h,w], got " +
                     shape_to_string(features.shape()));
  return conv3(ops::relu(conv2(ops::relu(conv1(features)))));
}

template <typename T>
std::vector<Var<T>> BaselineHead<T>::run_sequence(const std::vector<Var<T>>& features, std::size_t out_h,
                                                  std::size_t out_w) const {
  VDEPTH_REQUIRE(!features.empty(), "baseline head: empty feature sequence");
  std::vector<Var<T>> depths;
  for (const auto& f : features) depths.push_back(depth_from_logits(logits(f), out_h, out_w, config_.d_min));
  return depths;
}

template <typename T>
void BaselineHead<T>::collect(nn::ParameterRefs<T>& refs, const std::string& prefix) {
  conv1.collect(refs, prefix + "conv1");
  conv2.collect(refs, prefix + "conv2");
  conv3.collect(refs, prefix + "conv3");
}

template class ConvLstm<float>;
template class ConvLstm<double>;
template class ClstmStepper<float>;
template class ClstmStepper<double>;
template class BaselineHead<float>;
template class BaselineHead<double>;
template Var<float> depth_from_logits(const Var<float>&, std::size_t, std::size_t, double);
template Var<double> depth_from_logits(const Var<double>&, std::size_t, std::size_t, double);

}  // namespace vdepth
