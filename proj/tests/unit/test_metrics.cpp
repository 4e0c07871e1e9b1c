#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "test_support.hpp"
#include "vdepth/error.hpp"
#include "vdepth/metrics.hpp"

using namespace vdepth;
using vdepth::testing::random_tensor;

namespace {

struct SpatialOracle {
  double rel = 0, rms = 0, log10 = 0, d1 = 0, d2 = 0, d3 = 0;
};

SpatialOracle spatial_oracle(const std::vector<Tensor<double>>& d, const std::vector<Tensor<double>>& g,
                             const std::vector<Mask>& m) {
  double n = 0, rel = 0, sq = 0, lg = 0, c1 = 0, c2 = 0, c3 = 0;
  for (std::size_t s = 0; s < d.size(); ++s)
    for (std::size_t i = 0; i < d[s].size(); ++i) {
      if (!m[s][i]) continue;
      const double a = d[s][i], b = g[s][i];
      n += 1;
      rel += std::fabs(a - b) / b;
      sq += (a - b) * (a - b);
      lg += std::fabs(std::log10(a) - std::log10(b));
      const double r = a > b ? a / b : b / a;
      c1 += r < 1.25 ? 1 : 0;
      c2 += r < 1.5625 ? 1 : 0;
      c3 += r < 1.953125 ? 1 : 0;
    }
  return {rel / n, std::sqrt(sq / n), lg / n, c1 / n, c2 / n, c3 / n};
}

// Direct windowed SSIM: 2-D Gaussian weights renormalized over in-image taps.
double ssim_oracle(const Tensor<double>& a, const Tensor<double>& b, double L) {
  const int h = static_cast<int>(a.dim(0)), w = static_cast<int>(a.dim(1));
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  double total = 0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double W = 0, ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int di = -5; di <= 5; ++di)
        for (int dj = -5; dj <= 5; ++dj) {
          const int y = i + di, x = j + dj;
          if (y < 0 || y >= h || x < 0 || x >= w) continue;
          const double wt = std::exp(-(di * di + dj * dj) / (2 * 1.5 * 1.5));
          const double va = a[y * w + x], vb = b[y * w + x];
          W += wt;
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      ma /= W;
      mb /= W;
      const double va = saa / W - ma * ma, vb = sbb / W - mb * mb, cov = sab / W - ma * mb;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  return total / (h * w);
}

Tensor<double> texture(std::size_t h, std::size_t w, double dx, double dy, double offset = 0.0) {
  Tensor<double> t({h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double x = static_cast<double>(j) - dx, y = static_cast<double>(i) - dy;
      t[i * w + j] = offset + 0.5 + 0.2 * std::sin(0.35 * x + 0.1 * y) + 0.15 * std::cos(0.27 * y - 0.05 * x) +
                     0.1 * std::sin(0.13 * x * 0.7 + 0.21 * y);
    }
  return t;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

std::vector<Tensor<double>> moving_depth(std::size_t n, double speed) {
  std::vector<Tensor<double>> out;
  for (std::size_t t = 0; t < n; ++t) {
    auto f = texture(48, 48, speed * static_cast<double>(t), 0.0);
    for (auto& v : f.values()) v = 2.0 + 4.0 * v;
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

TEST(SpatialMetrics, MatchesLoopOracleOnRandomInstances) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 12; ++trial) {
    std::vector<Tensor<double>> d, g;
    std::vector<Mask> m;
    std::bernoulli_distribution keep(0.8);
    for (int s = 0; s < 2; ++s) {
      d.push_back(random_tensor({16, 16}, rng, 0.5, 10.0));
      g.push_back(random_tensor({16, 16}, rng, 0.5, 10.0));
      Mask mk({16, 16});
      for (auto& v : mk.values()) v = keep(rng);
      mk[0] = 1;
      m.push_back(std::move(mk));
    }
    const auto got = spatial_metrics(d, g, m);
    const auto want = spatial_oracle(d, g, m);
    EXPECT_NEAR(got.rel, want.rel, 1e-10);
    EXPECT_NEAR(got.rms, want.rms, 1e-10);
    EXPECT_NEAR(got.log10, want.log10, 1e-10);
    EXPECT_NEAR(got.delta1, want.d1, 1e-10);
    EXPECT_NEAR(got.delta2, want.d2, 1e-10);
    EXPECT_NEAR(got.delta3, want.d3, 1e-10);
  }
}

TEST(SpatialMetrics, PerfectPredictionIsExact) {
  std::mt19937_64 rng(2);
  const auto g = random_tensor({16, 16}, rng, 1.0, 9.0);
  const auto m = spatial_metrics<double>({g}, {g}, {Mask({16, 16}, 1)});
  EXPECT_EQ(m.rel, 0.0);
  EXPECT_EQ(m.rms, 0.0);
  EXPECT_EQ(m.log10, 0.0);
  EXPECT_EQ(m.delta1, 1.0);
  EXPECT_EQ(m.delta2, 1.0);
  EXPECT_EQ(m.delta3, 1.0);
  EXPECT_EQ(m.n_pixels, 256u);
}

TEST(SpatialMetrics, UniformScaleErrorClosedForm) {
  Tensor<double> g({4, 4}, 2.0), d({4, 4}, 2.6);
  const auto m = spatial_metrics<double>({d}, {g}, {Mask({4, 4}, 1)});
  EXPECT_NEAR(m.rel, 0.3, 1e-12);
  EXPECT_NEAR(m.rms, 0.6, 1e-12);
  EXPECT_NEAR(m.log10, std::log10(1.3), 1e-12);
  EXPECT_EQ(m.delta1, 0.0);
  EXPECT_EQ(m.delta2, 1.0);
  EXPECT_EQ(m.delta3, 1.0);
}

TEST(SpatialMetrics, PooledOverSetNotAveragedPerMap) {
  Tensor<double> g1({1, 1}, 1.0), d1({1, 1}, 2.0);
  Tensor<double> g2({1, 3}, 1.0), d2({1, 3}, 1.0);
  const auto m = spatial_metrics<double>({d1, d2}, {g1, g2}, {Mask({1, 1}, 1), Mask({1, 3}, 1)});
  EXPECT_NEAR(m.rel, 0.25, 1e-15);
  EXPECT_NEAR(m.rms, 0.5, 1e-15);
  EXPECT_NEAR(m.delta1, 0.75, 1e-15);
}

TEST(SpatialMetrics, AccumulatorMergeEqualsSinglePass) {
  std::mt19937_64 rng(5);
  std::vector<Tensor<double>> d, g;
  std::vector<Mask> m;
  SpatialAccumulator a, b;
  for (int s = 0; s < 4; ++s) {
    d.push_back(random_tensor({8, 8}, rng, 1, 5));
    g.push_back(random_tensor({8, 8}, rng, 1, 5));
    m.emplace_back(Shape{8, 8}, 1);
    (s < 2 ? a : b).add(d.back(), g.back(), m.back());
  }
  a.merge(b);
  const auto whole = spatial_metrics(d, g, m);
  EXPECT_NEAR(a.result().rel, whole.rel, 1e-14);
  EXPECT_EQ(a.count(), whole.n_pixels);
}

TEST(SpatialMetrics, RejectsEmptyMaskAndBadInput) {
  Tensor<double> g({2, 2}, 1.0);
  EXPECT_THROW(spatial_metrics<double>({g}, {g}, {Mask({2, 2}, 0)}), DegenerateInputError);
  EXPECT_THROW(spatial_metrics<double>({g}, {Tensor<double>({2, 3}, 1.0)}, {Mask({2, 2}, 1)}), PreconditionError);
  Tensor<double> z({2, 2}, 0.0);
  EXPECT_THROW(spatial_metrics<double>({z}, {g}, {Mask({2, 2}, 1)}), PreconditionError);
}

TEST(Ssim, IdentityIsExactlyOne) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5; ++i) {
    const auto a = random_tensor({16 + i, 20}, rng, 0, 10);
    EXPECT_EQ(ssim(a, a, 10.0), 1.0);
  }
}

TEST(Ssim, MatchesDirectWindowOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_tensor({16, 16}, rng, 0, 1);
    const auto b = random_tensor({16, 16}, rng, 0, 1);
    EXPECT_NEAR(ssim(a, b, 1.0), ssim_oracle(a, b, 1.0), 1e-10);
  }
}

TEST(Ssim, SymmetricAndBounded) {
  std::mt19937_64 rng(6);
  const auto a = random_tensor({20, 20}, rng, 0, 1);
  const auto b = random_tensor({20, 20}, rng, 0, 1);
  EXPECT_NEAR(ssim(a, b, 1.0), ssim(b, a, 1.0), 1e-15);
  const auto m = ssim_map(a, b, 1.0);
  for (double v : m.values()) {
    EXPECT_LE(v, 1.0 + 1e-12);
    EXPECT_GE(v, -1.0 - 1e-12);
  }
}

TEST(Ssim, ConstantImagesClosedForm) {
  const double x = 0.3, y = 0.7, L = 1.0;
  const double c1 = 1e-4;
  const double want = (2 * x * y + c1) / (x * x + y * y + c1);
  EXPECT_NEAR(ssim(Tensor<double>({12, 12}, x), Tensor<double>({12, 12}, y), L), want, 1e-10);
}

TEST(Ssim, MaskedAverageUsesSelectedPixels) {
  std::mt19937_64 rng(8);
  const auto a = random_tensor({12, 12}, rng, 0, 1);
  const auto b = random_tensor({12, 12}, rng, 0, 1);
  const auto map = ssim_map(a, b, 1.0);
  Mask m({12, 12}, 0);
  m[5] = m[77] = 1;
  EXPECT_NEAR(ssim(a, b, 1.0, m), 0.5 * (map[5] + map[77]), 1e-15);
  EXPECT_THROW(ssim(a, b, 1.0, Mask({12, 12}, 0)), DegenerateInputError);
}

TEST(OpticalFlow, IdenticalImagesGiveNearZeroFlow) {
  const auto a = texture(48, 48, 0, 0);
  const auto f = optical_flow(a, a);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    EXPECT_LT(std::abs(f.u[i]), 0.05);
    EXPECT_LT(std::abs(f.v[i]), 0.05);
  }
}

TEST(OpticalFlow, RecoversKnownTranslation) {
  const auto a = texture(64, 64, 0, 0);
  const auto b = texture(64, 64, 1.0, 0);
  const auto f = optical_flow(a, b);
  std::vector<double> u, v;
  for (std::size_t i = 8; i < 56; ++i)
    for (std::size_t j = 8; j < 56; ++j) {
      u.push_back(f.u[i * 64 + j]);
      v.push_back(f.v[i * 64 + j]);
    }
  EXPECT_NEAR(median(u), 1.0, 0.3);
  EXPECT_NEAR(median(v), 0.0, 0.2);

  const auto back = optical_flow(b, a);
  std::vector<double> ub;
  for (std::size_t i = 8; i < 56; ++i)
    for (std::size_t j = 8; j < 56; ++j) ub.push_back(back.u[i * 64 + j]);
  EXPECT_NEAR(median(u), -median(ub), 0.3);
}

TEST(OpticalFlow, ConstantImagesAndPreconditions) {
  const Tensor<double> c({16, 16}, 0.4);
  const auto f = optical_flow(c, c);
  EXPECT_TRUE(f.converged);
  for (double x : f.u.values()) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(optical_flow(c, Tensor<double>({16, 17}, 0.4)), PreconditionError);
  TvL1Options bad;
  bad.scale = 1.5;
  EXPECT_THROW(optical_flow(c, c, bad), PreconditionError);
}

TEST(Tcc, PerfectPredictionIsOne) {
  const auto g = moving_depth(4, 1.0);
  EXPECT_NEAR(tcc(g, g), 1.0, 1e-12);
}

TEST(Tcc, TwoFramesReduceToSsimOfDifferences) {
  const auto g = moving_depth(2, 1.0);
  std::mt19937_64 rng(9);
  auto d = g;
  for (auto& f : d)
    for (auto& v : f.values()) v += std::normal_distribution<double>(0, 0.05)(rng);
  Tensor<double> dd(g[0].shape()), gd(g[0].shape());
  for (std::size_t p = 0; p < dd.size(); ++p) {
    dd[p] = std::abs(d[0][p] - d[1][p]);
    gd[p] = std::abs(g[0][p] - g[1][p]);
  }
  EXPECT_NEAR(tcc(d, g), ssim_oracle(dd, gd, 10.0), 1e-10);
}

TEST(Tcc, DecreasesWithFlicker) {
  const auto g = moving_depth(5, 0.5);
  double prev = 1.0 + 1e-9;
  for (double sigma : {0.01, 0.05, 0.2}) {
    std::mt19937_64 rng(10);
    auto d = g;
    for (auto& f : d)
      for (auto& v : f.values()) v += std::normal_distribution<double>(0, sigma)(rng);
    const double s = tcc(d, g);
    EXPECT_LT(s, prev);
    prev = s;
  }
}

TEST(Tmc, PerfectPredictionIsOne) {
  const auto g = moving_depth(3, 1.0);
  EXPECT_NEAR(tmc(g, g), 1.0, 1e-12);
}

TEST(Tmc, ReversedMotionScoresLower) {
  const auto g = moving_depth(3, 1.0);
  const auto reversed = moving_depth(3, -1.0);
  const auto still = moving_depth(3, 0.0);
  EXPECT_GT(tmc(still, still), 0.95);
  EXPECT_LT(tmc(reversed, g), tmc(g, g) - 0.1);
}

TEST(MetricReport, TextAndJsonCarryExactlyTheKeys) {
  MetricReport r;
  r.rel = 0.125;
  r.rms = 0.5;
  r.log10 = 0.05;
  r.delta1 = 0.7;
  r.delta2 = 0.9;
  r.delta3 = 0.95;
  r.tcc = 0.8;
  r.tmc = 0.6;
  r.validate();
  std::istringstream text(r.to_text());
  std::vector<std::string> keys;
  for (std::string line; std::getline(text, line);) keys.push_back(line.substr(0, line.find('=')));
  EXPECT_EQ(keys, (std::vector<std::string>{"rel", "rms", "log10", "delta1", "delta2", "delta3", "tcc", "tmc"}));

  const auto back = MetricReport::from_json(r.to_json());
  EXPECT_EQ(back.rel, r.rel);
  EXPECT_EQ(back.tmc, r.tmc);
  EXPECT_EQ(back.delta2, r.delta2);
  EXPECT_THROW(MetricReport::from_json("{\"rel\": 1}"), FormatError);

  const auto dir = std::filesystem::temp_directory_path() / "vdepth_report_test";
  std::filesystem::create_directories(dir);
  r.write(dir / "m.txt", dir / "m.json");
  std::ifstream jf(dir / "m.json");
  std::stringstream ss;
  ss << jf.rdbuf();
  EXPECT_EQ(MetricReport::from_json(ss.str()).tcc, 0.8);
  std::filesystem::remove_all(dir);
}
