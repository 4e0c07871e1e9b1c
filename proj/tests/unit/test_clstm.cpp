#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "vdepth/clstm.hpp"
#include "vdepth/error.hpp"

namespace {

using namespace vdepth;
using vdepth::testing::gradient_check;
using vdepth::testing::random_tensor;
using vdepth::testing::random_tensor_f;

ClstmConfig small_config(std::size_t c = 6) {
  ClstmConfig cfg;
  cfg.feature_channels = c;
  cfg.refine_channels = 5;
  return cfg;
}

std::vector<Var<float>> random_features(std::size_t n, std::size_t b, std::size_t c, std::size_t h, std::size_t w,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Var<float>> out;
  for (std::size_t t = 0; t < n; ++t) out.emplace_back(random_tensor_f({b, c, h, w}, rng));
  return out;
}

void zero(Var<float>& v) { v.mutable_value().fill(0.0f); }

TEST(Clstm, GateKernelsSeeCPlusEightChannels) {
  ConvLstm<float> net(ClstmConfig{}, 1);
  for (const Var<float>* w : {&net.w_f, &net.w_i, &net.w_c, &net.w_o}) {
    EXPECT_EQ(w->shape(), (Shape{64, 72, 3, 3}));
  }
  EXPECT_EQ(net.d_prev.weight.shape(), (Shape{8, 64, 1, 1}));
  EXPECT_EQ(net.refine1.weight.shape(), (Shape{128, 128, 3, 3}));
  EXPECT_EQ(net.refine2.weight.shape(), (Shape{1, 128, 3, 3}));
  const auto f = random_features(1, 2, 64, 4, 6, 2)[0];
  const auto z = net.gate_preactivations(f, net.compress(f));
  EXPECT_EQ(z.shape(), (Shape{2, 256, 4, 6}));
}

TEST(Clstm, SaturatedGatesKeepTheCell) {
  ConvLstm<float> net(small_config(), 3);
  for (auto* w : {&net.w_f, &net.w_i, &net.w_c, &net.w_o}) zero(*w);
  net.b_f.mutable_value().fill(20.0f);
  net.b_i.mutable_value().fill(-20.0f);
  net.b_c.mutable_value().fill(0.7f);
  std::mt19937_64 rng(4);
  const auto f = random_features(1, 1, 6, 5, 5, 5)[0];
  ClstmState<float> s{Var<float>(random_tensor_f({1, 6, 5, 5}, rng, -3.0f, 3.0f)), net.compress(f)};
  const auto r = net.step(f, s);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < s.cell.value().size(); ++i)
    max_diff = std::max(max_diff, static_cast<double>(std::abs(r.state.cell.value()[i] - s.cell.value()[i])));
  EXPECT_LT(max_diff, 1e-3);
}

TEST(Clstm, ZeroCandidateKeepsZeroCell) {
  ConvLstm<float> net(small_config(), 5);
  zero(net.w_c);
  zero(net.b_c);
  const auto f = random_features(1, 2, 6, 4, 4, 6)[0];
  const auto r = net.step(f, net.initial_state(f));
  for (float v : r.state.cell.value().values()) EXPECT_EQ(v, 0.0f);
}

TEST(Clstm, GateRanges) {
  ConvLstm<float> net(small_config(), 7);
  const auto f = random_features(1, 2, 6, 5, 5, 8)[0];
  std::mt19937_64 rng(9);
  for (auto& v : net.w_f.mutable_value().values()) v *= 5.0f;
  const auto z = net.gate_preactivations(f, net.compress(f));
  const auto out = net.update(z, Var<float>(random_tensor_f({2, 6, 5, 5}, rng)));
  const auto& r = out.refine_input.value();
  const std::size_t half = r.size() / 2 / 2;  // per batch item: o (6 ch) then tanh C (6 ch)
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 2 * half; ++i) {
      const float v = r[b * 2 * half + i];
      if (i < half) {
        EXPECT_GT(v, 0.0f);
        EXPECT_LT(v, 1.0f);
      } else {
        EXPECT_GT(v, -1.0f);
        EXPECT_LT(v, 1.0f);
      }
    }
  // Gates directly.
  for (std::size_t k = 0; k < 4; ++k) {
    const auto s = ops::slice(z, 1, k * 6, 6);
    const auto g = k == 2 ? ops::tanh(s) : ops::sigmoid(s);
    for (float v : g.value().values()) {
      EXPECT_LT(v, 1.0f);
      EXPECT_GT(v, k == 2 ? -1.0f : 0.0f);
    }
  }
}

TEST(Clstm, DepthIsAboveMinimum) {
  ConvLstm<float> net(small_config(), 11);
  for (auto& v : net.refine2.weight.mutable_value().values()) v *= 30.0f;
  const auto feats = random_features(3, 2, 6, 4, 4, 12);
  for (const auto& d : net.run_sequence(feats, 16, 16)) {
    EXPECT_EQ(d.shape(), (Shape{2, 1, 16, 16}));
    for (float v : d.value().values()) EXPECT_GT(v, 0.01f);
  }
}

TEST(Clstm, SingleFrameIsOneStep) {
  ConvLstm<float> net(small_config(), 13);
  const auto f = random_features(1, 1, 6, 4, 4, 14);
  const auto seq = net.run_sequence(f, 4, 4);
  const auto step = net.step(f[0], net.initial_state(f[0]));
  EXPECT_EQ(seq[0].value(), depth_from_logits(step.logits, 4, 4, 0.01).value());
}

TEST(Clstm, RunsAreStateless) {
  ConvLstm<float> net(small_config(), 15);
  const auto f = random_features(5, 2, 6, 4, 4, 16);
  const auto a = net.run_sequence(f, 8, 8);
  const auto b = net.run_sequence(f, 8, 8);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(a[t].value(), b[t].value());
}

TEST(Clstm, StepperMatchesBatchBitwise) {
  ConvLstm<float> net(ClstmConfig{}, 17);
  const auto f = random_features(5, 1, 64, 8, 8, 18);
  const auto batch = net.run_sequence(f, 32, 32);
  ClstmStepper<float> stepper(net);
  for (int pass = 0; pass < 2; ++pass) {
    stepper.reset();
    for (std::size_t t = 0; t < 5; ++t) {
      const Tensor<float> logits = stepper.push(f[t].value());
      const auto d = depth_from_logits(Var<float>(logits), 32, 32, 0.01);
      EXPECT_EQ(d.value(), batch[t].value()) << "frame " << t;
    }
  }
}

TEST(Clstm, OutputDependsOnPreviousFrame) {
  ConvLstm<float> net(small_config(), 19);
  BaselineHead<float> head(small_config(), 19);
  auto f = random_features(4, 1, 6, 5, 5, 20);
  const auto a = net.run_sequence(f, 5, 5);
  const auto ha = head.run_sequence(f, 5, 5);
  std::mt19937_64 rng(21);
  f[1] = Var<float>(random_tensor_f({1, 6, 5, 5}, rng));
  const auto b = net.run_sequence(f, 5, 5);
  const auto hb = head.run_sequence(f, 5, 5);
  double change = 0.0;
  for (std::size_t i = 0; i < a[2].value().size(); ++i) change += std::abs(a[2].value()[i] - b[2].value()[i]);
  EXPECT_GT(change, 1e-4);
  EXPECT_EQ(a[0].value(), b[0].value());
  EXPECT_EQ(ha[2].value(), hb[2].value());
  EXPECT_EQ(ha[0].value(), hb[0].value());
}

TEST(Clstm, JacobianWithRespectToPreviousFrame) {
  ClstmConfig cfg = small_config(4);
  ConvLstm<double> net(cfg, 23);
  BaselineHead<double> head(cfg, 23);
  std::mt19937_64 rng(24);
  std::vector<Var<double>> f;
  for (int t = 0; t < 3; ++t) f.emplace_back(random_tensor({1, 4, 4, 4}, rng), true);
  auto norm = [](const Tensor<double>& g) {
    double s = 0.0;
    for (double v : g.values()) s += v * v;
    return std::sqrt(s);
  };
  ops::sum(net.run_sequence(f, 4, 4)[2]).backward();
  EXPECT_GT(norm(f[1].grad()), 1e-6);
  for (auto& v : f) v.zero_grad();
  ops::sum(head.run_sequence(f, 4, 4)[2]).backward();
  EXPECT_TRUE(f[1].grad().empty() || norm(f[1].grad()) == 0.0);
  EXPECT_GT(norm(f[2].grad()), 1e-6);
}

TEST(Clstm, GradientThroughTwoSteps) {
  ClstmConfig cfg = small_config(3);
  ConvLstm<double> net(cfg, 25);
  nn::ParameterRefs<double> refs;
  net.collect(refs, "");
  std::mt19937_64 rng(26);
  std::vector<Var<double>> f;
  for (int t = 0; t < 2; ++t) f.emplace_back(random_tensor({2, 3, 4, 4}, rng), true);
  Var<double> probe(random_tensor({2, 1, 4, 4}, rng));
  auto loss = [&] {
    const auto d = net.run_sequence(f, 4, 4);
    return ops::add(ops::sum(ops::mul(d[0], probe)), ops::sum(ops::mul(d[1], probe)));
  };
  std::vector<Var<double>*> vars{&f[0], &f[1]};
  for (auto* p : refs.vars()) vars.push_back(p);
  EXPECT_LT(gradient_check(vars, loss, 1e-6, 24), 1e-4);
}

TEST(Clstm, Preconditions) {
  ConvLstm<float> net(small_config(), 27);
  EXPECT_THROW(net.run_sequence({}, 4, 4), PreconditionError);
  const auto f = random_features(1, 1, 6, 4, 4, 28)[0];
  const auto g = random_features(1, 1, 6, 5, 4, 28)[0];
  EXPECT_THROW(net.step(g, net.initial_state(f)), PreconditionError);
  const auto wrong = random_features(1, 1, 5, 4, 4, 28)[0];
  EXPECT_THROW(net.compress(wrong), PreconditionError);
}

TEST(BaselineHead, ChannelSchedule) {
  BaselineHead<float> head(ClstmConfig{}, 1);
  EXPECT_EQ(head.conv1.weight.shape(), (Shape{128, 64, 3, 3}));
  EXPECT_EQ(head.conv2.weight.shape(), (Shape{128, 128, 3, 3}));
  EXPECT_EQ(head.conv3.weight.shape(), (Shape{1, 128, 3, 3}));
}

TEST(BaselineHead, PermutationEquivariantAndUpsampled) {
  BaselineHead<float> head(small_config(), 2);
  const auto f = random_features(4, 1, 6, 4, 5, 3);
  const auto a = head.run_sequence(f, 16, 20);
  const std::vector<Var<float>> perm{f[2], f[0], f[3], f[1]};
  const auto b = head.run_sequence(perm, 16, 20);
  EXPECT_EQ(a[0].shape(), (Shape{1, 1, 16, 20}));
  EXPECT_EQ(b[0].value(), a[2].value());
  EXPECT_EQ(b[1].value(), a[0].value());
  EXPECT_EQ(b[2].value(), a[3].value());
  EXPECT_EQ(b[3].value(), a[1].value());
}

TEST(Heads, StartNearInitialDepth) {
  ClstmConfig cfg = small_config();
  cfg.init_depth = 3.0;
  BaselineHead<float> head(cfg, 4);
  for (auto* c : {&head.conv1, &head.conv2, &head.conv3}) c->weight.mutable_value().fill(0.0f);
  const auto d = head.run_sequence(random_features(1, 1, 6, 4, 4, 5), 4, 4)[0];
  for (float v : d.value().values()) EXPECT_NEAR(v, 3.0f, 1e-5f);
  EXPECT_NEAR(softplus_inverse(std::log1p(std::exp(0.3))), 0.3, 1e-12);
}

}  // namespace
