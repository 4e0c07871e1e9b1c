#include <gtest/gtest.h>

#include "test_support.hpp"
#include "vdepth/ops.hpp"

namespace {

using vdepth::Shape;
using vdepth::Tensor;
using vdepth::Var;
using vdepth::testing::gradient_check;
using vdepth::testing::random_tensor;
namespace ops = vdepth::ops;

// Weighted sum with fixed random weights, so every output element matters.
Var<double> probe(const Var<double>& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Var<double> w(random_tensor(y.shape(), rng));
  return ops::sum(ops::mul(y, w));
}

TEST(Ops, ElementwiseGradients) {
  std::mt19937_64 rng(1);
  Var<double> a(random_tensor({2, 3, 4}, rng), true);
  Var<double> b(random_tensor({2, 3, 4}, rng), true);
  auto f = [&] {
    auto y = ops::add(ops::mul(ops::sigmoid(a), ops::tanh(b)), ops::softplus(ops::sub(a, b)));
    return probe(ops::add_scalar(ops::scale(y, 1.7), 0.3));
  };
  EXPECT_LT(gradient_check({&a, &b}, f), 1e-7);
}

TEST(Ops, ReluGradientAwayFromKink) {
  std::mt19937_64 rng(2);
  Tensor<double> t = random_tensor({40}, rng);
  for (auto& v : t.values()) v += v > 0 ? 0.1 : -0.1;
  Var<double> x(t, true);
  EXPECT_LT(gradient_check({&x}, [&] { return probe(ops::relu(x)); }), 1e-8);
}

TEST(Ops, Conv2dGradientAndShape) {
  std::mt19937_64 rng(3);
  Var<double> x(random_tensor({2, 3, 7, 6}, rng), true);
  Var<double> w(random_tensor({4, 3, 3, 3}, rng), true);
  Var<double> b(random_tensor({4}, rng), true);
  for (std::size_t stride : {1u, 2u}) {
    auto y = ops::conv2d(x, w, b, stride, 1);
    EXPECT_EQ(y.shape(), (Shape{2, 4, (7 + 2 - 3) / stride + 1, (6 + 2 - 3) / stride + 1}));
    EXPECT_LT(gradient_check({&x, &w, &b}, [&] { return probe(ops::conv2d(x, w, b, stride, 1)); }), 1e-7);
  }
}

TEST(Ops, PointwiseConvMatchesManualSum) {
  std::mt19937_64 rng(4);
  Var<double> x(random_tensor({1, 2, 2, 2}, rng), true);
  Var<double> w(random_tensor({3, 2, 1, 1}, rng), true);
  Var<double> b(random_tensor({3}, rng), true);
  auto y = ops::conv2d(x, w, b, 1, 0);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t p = 0; p < 4; ++p) {
      const double expect = w.value()[o * 2] * x.value()[p] + w.value()[o * 2 + 1] * x.value()[4 + p] + b.value()[o];
      EXPECT_NEAR(y.value()[o * 4 + p], expect, 1e-14);
    }
  EXPECT_LT(gradient_check({&x, &w, &b}, [&] { return probe(ops::conv2d(x, w, b, 1, 0)); }), 1e-8);
}

TEST(Ops, Conv3dGradientAndShape) {
  std::mt19937_64 rng(5);
  Var<double> x(random_tensor({2, 2, 3, 6, 6}, rng), true);
  Var<double> w(random_tensor({3, 2, 3, 3, 3}, rng), true);
  Var<double> b(random_tensor({3}, rng), true);
  auto y = ops::conv3d(x, w, b, {2, 2, 2}, {1, 1, 1});
  EXPECT_EQ(y.shape(), (Shape{2, 3, 2, 3, 3}));
  EXPECT_LT(gradient_check({&x, &w, &b}, [&] { return probe(ops::conv3d(x, w, b, {2, 2, 2}, {1, 1, 1})); }), 1e-7);
}

TEST(Ops, BatchNormTrainingAndInference) {
  std::mt19937_64 rng(6);
  Var<double> x(random_tensor({3, 2, 4, 4}, rng), true);
  Var<double> g(random_tensor({2}, rng, 0.5, 1.5), true);
  Var<double> be(random_tensor({2}, rng), true);
  Tensor<double> rm({2}, 0.0), rv({2}, 1.0);
  auto f_train = [&] { return probe(ops::batch_norm(x, g, be, rm, rv, true, 0.1, 1e-5)); };
  EXPECT_LT(gradient_check({&x, &g, &be}, f_train), 1e-6);

  // Normalized output has zero mean / unit variance per channel.
  Tensor<double> one({2}, 1.0), zero({2}, 0.0);
  Var<double> unit_g(one), zero_b(zero);
  auto y = ops::batch_norm(x, unit_g, zero_b, rm, rv, true, 0.1, 0.0);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, s2 = 0;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t q = 0; q < 16; ++q) {
        const double v = y.value()[(n * 2 + c) * 16 + q];
        s += v;
        s2 += v * v;
      }
    EXPECT_NEAR(s / 48, 0.0, 1e-12);
    EXPECT_NEAR(s2 / 48, 1.0, 1e-9);
  }

  auto f_eval = [&] { return probe(ops::batch_norm(x, g, be, rm, rv, false, 0.1, 1e-5)); };
  EXPECT_LT(gradient_check({&x, &g, &be}, f_eval), 1e-7);
}

TEST(Ops, ConcatSliceReshape) {
  std::mt19937_64 rng(7);
  Var<double> a(random_tensor({2, 3, 2, 2}, rng), true);
  Var<double> b(random_tensor({2, 1, 2, 2}, rng), true);
  std::vector<Var<double>> parts{a, b};
  auto c = ops::concat<double>(parts, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 4, 2, 2}));
  auto back = ops::slice(c, 1, 3, 1);
  EXPECT_EQ(back.value(), b.value());
  auto f = [&] {
    std::vector<Var<double>> p{a, b};
    auto cc = ops::concat<double>(p, 1);
    auto s0 = ops::slice(cc, 0, 1, 1);
    return probe(ops::reshape(ops::slice(s0, 1, 1, 3), Shape{12}));
  };
  EXPECT_LT(gradient_check({&a, &b}, f), 1e-9);
}

TEST(Ops, ResizeBilinearHalvingIsBoxAverage) {
  std::mt19937_64 rng(8);
  Var<double> x(random_tensor({1, 1, 4, 6}, rng), true);
  auto y = ops::resize_bilinear(x, 2, 3);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const auto& v = x.value();
      const double box =
          (v[(2 * i) * 6 + 2 * j] + v[(2 * i) * 6 + 2 * j + 1] + v[(2 * i + 1) * 6 + 2 * j] + v[(2 * i + 1) * 6 + 2 * j + 1]) / 4;
      EXPECT_NEAR(y.value()[i * 3 + j], box, 1e-14);
    }
  EXPECT_LT(gradient_check({&x}, [&] { return probe(ops::resize_bilinear(x, 7, 9)); }), 1e-9);
  EXPECT_LT(gradient_check({&x}, [&] { return probe(ops::upsample_nearest(x, 2)); }), 1e-9);
}

TEST(Ops, MaxPoolKeepsPartialWindows) {
  std::mt19937_64 rng(9);
  Var<double> x(random_tensor({1, 2, 3, 5, 4}, rng), true);
  auto y = ops::max_pool3d(x);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2, 3, 2}));
  Var<double> single(random_tensor({1, 1, 1, 2, 2}, rng));
  EXPECT_EQ(ops::max_pool3d(single).shape(), (Shape{1, 1, 1, 1, 1}));
  EXPECT_LT(gradient_check({&x}, [&] { return probe(ops::max_pool3d(x)); }), 1e-9);
}

TEST(Ops, LinearPoolAndClipPacking) {
  std::mt19937_64 rng(10);
  Var<double> frames(random_tensor({6, 2, 3, 3}, rng), true);  // T=3, B=2
  auto clips = ops::frames_to_clips(frames, 3);
  EXPECT_EQ(clips.shape(), (Shape{2, 2, 3, 3, 3}));
  // clip b=1, channel 0, t=2 is frame row t*B+b = 5.
  EXPECT_EQ(clips.value()[((1 * 2 + 0) * 3 + 2) * 9 + 4], frames.value()[(5 * 2 + 0) * 9 + 4]);
  Var<double> w(random_tensor({4, 2}, rng), true);
  Var<double> b(random_tensor({4}, rng), true);
  auto f = [&] { return probe(ops::linear(ops::global_avg_pool(ops::frames_to_clips(frames, 3)), w, b)); };
  EXPECT_LT(gradient_check({&frames, &w, &b}, f), 1e-9);
}

TEST(Ops, NoGradGuardRecordsNothing) {
  Var<double> x(Tensor<double>({3}, 1.0), true);
  vdepth::NoGradGuard guard;
  auto y = ops::scale(x, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Ops, ShapeErrorsArePreconditionErrors) {
  Var<double> a(Tensor<double>({2, 2})), b(Tensor<double>({3}));
  EXPECT_THROW(ops::add(a, b), vdepth::PreconditionError);
  Var<double> x(Tensor<double>({1, 3, 4, 4})), w(Tensor<double>({2, 2, 3, 3}));
  EXPECT_THROW(ops::conv2d(x, w, Var<double>(), 1, 1), vdepth::PreconditionError);
}

}  // namespace
