#include "vdepth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "vdepth/error.hpp"

namespace vdepth {

// ---- spatial metrics ---------------------------------------------------------

template <typename T>
void SpatialAccumulator::add_impl(const Tensor<T>& d, const Tensor<T>& g, const Mask& mask) {
  VDEPTH_REQUIRE(d.shape() == g.shape() && mask.shape() == d.shape(),
                 "spatial metrics: prediction " + shape_to_string(d.shape()) + ", target " +
                     shape_to_string(g.shape()) + " and mask " + shape_to_string(mask.shape()) + " must agree");
  const double t1 = 1.25, t2 = t1 * t1, t3 = t2 * t1;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!mask[i]) continue;
    const double dv = static_cast<double>(d[i]), gv = static_cast<double>(g[i]);
    VDEPTH_REQUIRE(gv > 0.0 && dv > 0.0, "spatial metrics: depths at valid pixels must be positive");
    const double e = dv - gv;
    abs_rel_ += std::abs(e) / gv;
    sq_ += e * e;
    log10_ += std::abs(std::log10(dv) - std::log10(gv));
    const double ratio = std::max(dv / gv, gv / dv);
    within_[0] += ratio < t1;
    within_[1] += ratio < t2;
    within_[2] += ratio < t3;
    ++n_;
  }
}

void SpatialAccumulator::add(const Tensor<float>& d, const Tensor<float>& g, const Mask& mask) { add_impl(d, g, mask); }
void SpatialAccumulator::add(const Tensor<double>& d, const Tensor<double>& g, const Mask& mask) {
  add_impl(d, g, mask);
}

void SpatialAccumulator::merge(const SpatialAccumulator& o) {
  n_ += o.n_;
  abs_rel_ += o.abs_rel_;
  sq_ += o.sq_;
  log10_ += o.log10_;
  for (int k = 0; k < 3; ++k) within_[k] += o.within_[k];
}

SpatialMetrics SpatialAccumulator::result() const {
  if (n_ == 0) throw DegenerateInputError("spatial metrics: no valid pixel");
  const double n = static_cast<double>(n_);
  SpatialMetrics m;
  m.rel = abs_rel_ / n;
  m.rms = std::sqrt(sq_ / n);
  m.log10 = log10_ / n;
  m.delta1 = static_cast<double>(within_[0]) / n;
  m.delta2 = static_cast<double>(within_[1]) / n;
  m.delta3 = static_cast<double>(within_[2]) / n;
  m.n_pixels = n_;
  return m;
}

template <typename T>
SpatialMetrics spatial_metrics(const std::vector<Tensor<T>>& d, const std::vector<Tensor<T>>& g,
                               const std::vector<Mask>& masks) {
  VDEPTH_REQUIRE(d.size() == g.size() && d.size() == masks.size(), "spatial metrics: map counts differ");
  SpatialAccumulator acc;
  for (std::size_t i = 0; i < d.size(); ++i) acc.add(d[i], g[i], masks[i]);
  return acc.result();
}

template SpatialMetrics spatial_metrics(const std::vector<Tensor<float>>&, const std::vector<Tensor<float>>&,
                                        const std::vector<Mask>&);
template SpatialMetrics spatial_metrics(const std::vector<Tensor<double>>&, const std::vector<Tensor<double>>&,
                                        const std::vector<Mask>&);

// ---- filtering helpers ---------------------------------------------------

namespace {

void require_image(const Tensor<double>& a, const char* what) {
  VDEPTH_REQUIRE(a.rank() == 2 && a.size() > 0, std::string(what) + ": expected a non-empty [H,W] image, got " +
                                                    shape_to_string(a.shape()));
}

std::vector<double> gaussian_taps(double sigma, std::size_t radius) {
  std::vector<double> k(2 * radius + 1);
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double x = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-x * x / (2.0 * sigma * sigma));
  }
  return k;
}

// Separable correlation with taps that are renormalized over the samples
// inside the image.
Tensor<double> filter_truncated(const Tensor<double>& x, const std::vector<double>& taps) {
  const std::size_t h = x.dim(0), w = x.dim(1);
  const auto r = static_cast<std::ptrdiff_t>(taps.size() / 2);
  Tensor<double> tmp({h, w}), out({h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double s = 0.0, norm = 0.0;
      for (std::ptrdiff_t t = -r; t <= r; ++t) {
        const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j) + t;
        if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
        s += taps[static_cast<std::size_t>(t + r)] * x[i * w + static_cast<std::size_t>(jj)];
        norm += taps[static_cast<std::size_t>(t + r)];
      }
      tmp[i * w + j] = s / norm;
    }
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double s = 0.0, norm = 0.0;
      for (std::ptrdiff_t t = -r; t <= r; ++t) {
        const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i) + t;
        if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
        s += taps[static_cast<std::size_t>(t + r)] * tmp[static_cast<std::size_t>(ii) * w + j];
        norm += taps[static_cast<std::size_t>(t + r)];
      }
      out[i * w + j] = s / norm;
    }
  return out;
}

// Edge-clamped Gaussian blur.
Tensor<double> blur_clamped(const Tensor<double>& x, double sigma) {
  const std::size_t h = x.dim(0), w = x.dim(1);
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  auto taps = gaussian_taps(sigma, static_cast<std::size_t>(radius));
  double total = 0.0;
  for (double t : taps) total += t;
  for (double& t : taps) t /= total;
  auto clampi = [](std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  Tensor<double> tmp({h, w}), out({h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double s = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t)
        s += taps[static_cast<std::size_t>(t + radius)] * x[i * w + clampi(static_cast<std::ptrdiff_t>(j) + t, w)];
      tmp[i * w + j] = s;
    }
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double s = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t)
        s += taps[static_cast<std::size_t>(t + radius)] * tmp[clampi(static_cast<std::ptrdiff_t>(i) + t, h) * w + j];
      out[i * w + j] = s;
    }
  return out;
}

// Bilinear sample with clamped coordinates.
double sample(const Tensor<double>& x, double px, double py) {
  const std::size_t h = x.dim(0), w = x.dim(1);
  px = std::clamp(px, 0.0, static_cast<double>(w - 1));
  py = std::clamp(py, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<std::size_t>(px), y0 = static_cast<std::size_t>(py);
  const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = px - static_cast<double>(x0), fy = py - static_cast<double>(y0);
  return (x[y0 * w + x0] * (1 - fx) + x[y0 * w + x1] * fx) * (1 - fy) +
         (x[y1 * w + x0] * (1 - fx) + x[y1 * w + x1] * fx) * fy;
}

}  // namespace

// ---- SSIM ----------------------------------------------------------------

Tensor<double> ssim_map(const Tensor<double>& a, const Tensor<double>& b, double dynamic_range,
                        const SsimOptions& options) {
  require_image(a, "ssim");
  VDEPTH_REQUIRE(a.shape() == b.shape(), "ssim: image shapes differ");
  VDEPTH_REQUIRE(dynamic_range > 0.0, "ssim: dynamic range must be positive");
  VDEPTH_REQUIRE(options.window % 2 == 1 && options.sigma > 0.0, "ssim: window must be odd, sigma positive");
  const auto taps = gaussian_taps(options.sigma, options.window / 2);
  Tensor<double> aa(a.shape()), bb(a.shape()), ab(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_truncated(a, taps), mu_b = filter_truncated(b, taps);
  const auto e_aa = filter_truncated(aa, taps), e_bb = filter_truncated(bb, taps), e_ab = filter_truncated(ab, taps);
  const double c1 = std::pow(options.k1 * dynamic_range, 2), c2 = std::pow(options.k2 * dynamic_range, 2);
  Tensor<double> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    out[i] = (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return out;
}

double ssim(const Tensor<double>& a, const Tensor<double>& b, double dynamic_range, const SsimOptions& options) {
  const auto m = ssim_map(a, b, dynamic_range, options);
  double s = 0.0;
  for (double v : m.values()) s += v;
  return s / static_cast<double>(m.size());
}

double ssim(const Tensor<double>& a, const Tensor<double>& b, double dynamic_range, const Mask& mask,
            const SsimOptions& options) {
  VDEPTH_REQUIRE(mask.shape() == a.shape(), "ssim: mask shape differs");
  const auto m = ssim_map(a, b, dynamic_range, options);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (mask[i]) {
      s += m[i];
      ++n;
    }
  if (n == 0) throw DegenerateInputError("ssim: mask selects no pixel");
  return s / static_cast<double>(n);
}

// ---- TV-L1 optical flow --------------------------------------------------

namespace {

struct Level {
  Tensor<double> i0, i1;
};

Tensor<double> downsample(const Tensor<double>& x, double scale) {
  const std::size_t h = x.dim(0), w = x.dim(1);
  const auto nh = static_cast<std::size_t>(std::ceil(static_cast<double>(h) * scale));
  const auto nw = static_cast<std::size_t>(std::ceil(static_cast<double>(w) * scale));
  const auto smooth = blur_clamped(x, 0.6 * std::sqrt(1.0 / (scale * scale) - 1.0));
  Tensor<double> out({nh, nw});
  for (std::size_t i = 0; i < nh; ++i)
    for (std::size_t j = 0; j < nw; ++j)
      out[i * nw + j] = sample(smooth, static_cast<double>(j) / scale, static_cast<double>(i) / scale);
  return out;
}

Tensor<double> upsample_flow(const Tensor<double>& f, std::size_t h, std::size_t w, double scale) {
  const std::size_t fh = f.dim(0), fw = f.dim(1);
  Tensor<double> out({h, w});
  const double sx = static_cast<double>(fw) / static_cast<double>(w), sy = static_cast<double>(fh) / static_cast<double>(h);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      out[i * w + j] = sample(f, static_cast<double>(j) * sx, static_cast<double>(i) * sy) / scale;
  return out;
}

void centered_gradient(const Tensor<double>& x, Tensor<double>& gx, Tensor<double>& gy) {
  const std::size_t h = x.dim(0), w = x.dim(1);
  gx = Tensor<double>({h, w});
  gy = Tensor<double>({h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t jl = j > 0 ? j - 1 : j, jr = j + 1 < w ? j + 1 : j;
      const std::size_t iu = i > 0 ? i - 1 : i, id = i + 1 < h ? i + 1 : i;
      gx[i * w + j] = (x[i * w + jr] - x[i * w + jl]) / static_cast<double>(std::max<std::size_t>(jr - jl, 1));
      gy[i * w + j] = (x[id * w + j] - x[iu * w + j]) / static_cast<double>(std::max<std::size_t>(id - iu, 1));
    }
}

// One pyramid level of the duality-based scheme. Returns whether the last
// warp's inner loop met the stopping threshold.
bool tvl1_level(const Tensor<double>& i0, const Tensor<double>& i1, Tensor<double>& u1, Tensor<double>& u2,
                const TvL1Options& o) {
  const std::size_t h = i0.dim(0), w = i0.dim(1), n = h * w;
  const double l_t = o.lambda * o.theta, taut = o.tau / o.theta;
  Tensor<double> i1x, i1y;
  centered_gradient(i1, i1x, i1y);
  std::vector<double> p11(n, 0.0), p12(n, 0.0), p21(n, 0.0), p22(n, 0.0);
  std::vector<double> wx(n), wy(n), grad(n), rho_c(n), v1(n), v2(n), div1(n), div2(n);
  bool converged = false;
  for (std::size_t warp = 0; warp < o.warps; ++warp) {
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t p = i * w + j;
        const double x = static_cast<double>(j) + u1[p], y = static_cast<double>(i) + u2[p];
        const double warped = sample(i1, x, y);
        wx[p] = sample(i1x, x, y);
        wy[p] = sample(i1y, x, y);
        grad[p] = wx[p] * wx[p] + wy[p] * wy[p];
        rho_c[p] = warped - wx[p] * u1[p] - wy[p] * u2[p] - i0[p];
      }
    converged = false;
    for (std::size_t it = 0; it < o.iterations; ++it) {
      for (std::size_t p = 0; p < n; ++p) {
        const double rho = rho_c[p] + wx[p] * u1[p] + wy[p] * u2[p];
        double d1, d2;
        if (rho < -l_t * grad[p]) {
          d1 = l_t * wx[p];
          d2 = l_t * wy[p];
        } else if (rho > l_t * grad[p]) {
          d1 = -l_t * wx[p];
          d2 = -l_t * wy[p];
        } else if (grad[p] < 1e-10) {
          d1 = d2 = 0.0;
        } else {
          const double fi = -rho / grad[p];
          d1 = fi * wx[p];
          d2 = fi * wy[p];
        }
        v1[p] = u1[p] + d1;
        v2[p] = u2[p] + d2;
      }
      // Divergence: negative adjoint of the forward difference below.
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const std::size_t p = i * w + j;
          auto div = [&](const std::vector<double>& qx, const std::vector<double>& qy) {
            double d = 0.0;
            if (j + 1 < w) d += qx[p];
            if (j > 0) d -= qx[p - 1];
            if (i + 1 < h) d += qy[p];
            if (i > 0) d -= qy[p - w];
            return d;
          };
          div1[p] = div(p11, p12);
          div2[p] = div(p21, p22);
        }
      double err = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        const double a = v1[p] + o.theta * div1[p], b = v2[p] + o.theta * div2[p];
        err += (a - u1[p]) * (a - u1[p]) + (b - u2[p]) * (b - u2[p]);
        u1[p] = a;
        u2[p] = b;
      }
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const std::size_t p = i * w + j;
          const double u1x = j + 1 < w ? u1[p + 1] - u1[p] : 0.0, u1y = i + 1 < h ? u1[p + w] - u1[p] : 0.0;
          const double u2x = j + 1 < w ? u2[p + 1] - u2[p] : 0.0, u2y = i + 1 < h ? u2[p + w] - u2[p] : 0.0;
          const double ng1 = 1.0 + taut * std::hypot(u1x, u1y), ng2 = 1.0 + taut * std::hypot(u2x, u2y);
          p11[p] = (p11[p] + taut * u1x) / ng1;
          p12[p] = (p12[p] + taut * u1y) / ng1;
          p21[p] = (p21[p] + taut * u2x) / ng2;
          p22[p] = (p22[p] + taut * u2y) / ng2;
        }
      if (err / static_cast<double>(n) < o.epsilon * o.epsilon) {
        converged = true;
        break;
      }
    }
  }
  return converged;
}

}  // namespace

FlowField optical_flow(const Tensor<double>& a, const Tensor<double>& b, const TvL1Options& o) {
  require_image(a, "optical_flow");
  VDEPTH_REQUIRE(a.shape() == b.shape(), "optical_flow: image shapes differ");
  VDEPTH_REQUIRE(o.levels >= 1 && o.scale > 0.0 && o.scale < 1.0 && o.warps >= 1 && o.iterations >= 1,
                 "optical_flow: invalid solver options");
  VDEPTH_REQUIRE(o.lambda > 0.0 && o.theta > 0.0 && o.tau > 0.0, "optical_flow: weights must be positive");
  const std::size_t h = a.dim(0), w = a.dim(1);
  for (std::size_t i = 0; i < a.size(); ++i)
    VDEPTH_REQUIRE(std::isfinite(a[i]) && std::isfinite(b[i]), "optical_flow: non-finite input");

  // Joint rescale to [0, 255], then light presmoothing.
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < a.size(); ++i) {
    lo = std::min({lo, a[i], b[i]});
    hi = std::max({hi, a[i], b[i]});
  }
  FlowField out{Tensor<double>({h, w}), Tensor<double>({h, w}), true};
  if (hi - lo <= 0.0) return out;
  Tensor<double> n0({h, w}), n1({h, w});
  for (std::size_t i = 0; i < a.size(); ++i) {
    n0[i] = 255.0 * (a[i] - lo) / (hi - lo);
    n1[i] = 255.0 * (b[i] - lo) / (hi - lo);
  }
  std::vector<Level> pyramid{{blur_clamped(n0, 0.8), blur_clamped(n1, 0.8)}};
  for (std::size_t l = 1; l < o.levels; ++l) {
    const auto& prev = pyramid.back();
    if (std::min(prev.i0.dim(0), prev.i0.dim(1)) * o.scale < 8.0) break;
    pyramid.push_back({downsample(prev.i0, o.scale), downsample(prev.i1, o.scale)});
  }

  Tensor<double> u1(pyramid.back().i0.shape()), u2(pyramid.back().i0.shape());
  bool converged = false;
  for (std::size_t l = pyramid.size(); l-- > 0;) {
    const auto& lev = pyramid[l];
    if (u1.shape() != lev.i0.shape()) {
      u1 = upsample_flow(u1, lev.i0.dim(0), lev.i0.dim(1), o.scale);
      u2 = upsample_flow(u2, lev.i0.dim(0), lev.i0.dim(1), o.scale);
    }
    converged = tvl1_level(lev.i0, lev.i1, u1, u2, o);
  }
  out.u = std::move(u1);
  out.v = std::move(u2);
  out.converged = converged;
  return out;
}

// ---- temporal consistency ------------------------------------------------

namespace {

void check_sequences(const std::vector<Tensor<double>>& d, std::size_t g_size, const char* what) {
  VDEPTH_REQUIRE(d.size() >= 2, std::string(what) + ": sequences need at least 2 frames");
  VDEPTH_REQUIRE(d.size() == g_size, std::string(what) + ": sequence lengths differ");
}

}  // namespace

double tcc(const std::vector<Tensor<double>>& d, const std::vector<Tensor<double>>& g, const std::vector<Mask>& masks,
           const TemporalOptions& options) {
  check_sequences(d, g.size(), "tcc");
  VDEPTH_REQUIRE(masks.empty() || masks.size() == d.size(), "tcc: one mask per frame expected");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < d.size(); ++i) {
    VDEPTH_REQUIRE(d[i].shape() == g[i].shape() && d[i + 1].shape() == d[i].shape() && g[i + 1].shape() == g[i].shape(),
                   "tcc: frame shapes differ");
    Tensor<double> dd(d[i].shape()), gd(g[i].shape());
    Mask both(d[i].shape(), 1);
    for (std::size_t p = 0; p < dd.size(); ++p) {
      if (!masks.empty()) both[p] = masks[i][p] && masks[i + 1][p];
      dd[p] = both[p] ? std::abs(d[i][p] - d[i + 1][p]) : 0.0;
      gd[p] = both[p] ? std::abs(g[i][p] - g[i + 1][p]) : 0.0;
    }
    total += masks.empty() ? ssim(dd, gd, options.depth_range) : ssim(dd, gd, options.depth_range, both);
  }
  return total / static_cast<double>(d.size() - 1);
}

FlowField depth_flow(const Tensor<double>& d0, const Tensor<double>& d1, const TemporalOptions& options) {
  Tensor<double> a(d0.shape()), b(d1.shape());
  for (std::size_t p = 0; p < a.size(); ++p) {
    a[p] = std::clamp(d0[p] / options.depth_range, 0.0, 1.0);
    b[p] = std::clamp(d1[p] / options.depth_range, 0.0, 1.0);
  }
  return optical_flow(a, b, options.flow);
}

double tmc(const std::vector<Tensor<double>>& d, const std::vector<FlowField>& g_flows,
           const TemporalOptions& options) {
  VDEPTH_REQUIRE(d.size() >= 2, "tmc: sequences need at least 2 frames");
  VDEPTH_REQUIRE(g_flows.size() + 1 == d.size(), "tmc: need one reference flow per consecutive pair");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < d.size(); ++i) {
    const FlowField f = depth_flow(d[i], d[i + 1], options);
    VDEPTH_REQUIRE(f.u.shape() == g_flows[i].u.shape(), "tmc: flow shapes differ");
    total += 0.5 * (ssim(f.u, g_flows[i].u, options.flow_range) + ssim(f.v, g_flows[i].v, options.flow_range));
  }
  return total / static_cast<double>(d.size() - 1);
}

double tmc(const std::vector<Tensor<double>>& d, const std::vector<Tensor<double>>& g,
           const TemporalOptions& options) {
  check_sequences(d, g.size(), "tmc");
  std::vector<FlowField> flows;
  for (std::size_t i = 0; i + 1 < g.size(); ++i) flows.push_back(depth_flow(g[i], g[i + 1], options));
  return tmc(d, flows, options);
}

// ---- report --------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void MetricReport::validate() const {
  for (double v : {rel, rms, log10, delta1, delta2, delta3, tcc, tmc})
    VDEPTH_REQUIRE(std::isfinite(v), "metric report: non-finite value");
  VDEPTH_REQUIRE(delta1 <= delta2 && delta2 <= delta3 && delta3 <= 1.0, "metric report: deltas out of order");
}

std::string MetricReport::to_text() const {
  std::string s;
  const std::pair<const char*, double> rows[] = {{"rel", rel},       {"rms", rms},       {"log10", log10},
                                                 {"delta1", delta1}, {"delta2", delta2}, {"delta3", delta3},
                                                 {"tcc", tcc},       {"tmc", tmc}};
  for (const auto& [k, v] : rows) s += std::string(k) + "=" + fmt(v) + "\n";
  return s;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["rel"] = rel;
  j["rms"] = rms;
  j["log10"] = log10;
  j["delta1"] = delta1;
  j["delta2"] = delta2;
  j["delta3"] = delta3;
  j["tcc"] = tcc;
  j["tmc"] = tmc;
  return j.dump(2) + "\n";
}

MetricReport MetricReport::from_json(const std::string& text) {
  MetricReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.rel = j.at("rel").get<double>();
    r.rms = j.at("rms").get<double>();
    r.log10 = j.at("log10").get<double>();
    r.delta1 = j.at("delta1").get<double>();
    r.delta2 = j.at("delta2").get<double>();
    r.delta3 = j.at("delta3").get<double>();
    r.tcc = j.at("tcc").get<double>();
    r.tmc = j.at("tmc").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metric report: ") + e.what());
  }
  return r;
}

void MetricReport::write(const std::filesystem::path& text_path, const std::filesystem::path& json_path) const {
  for (const auto& [path, body] : {std::pair{text_path, to_text()}, std::pair{json_path, to_json()}}) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << body;
    if (!f) throw IoError("failed writing " + path.string());
  }
}

}  // namespace vdepth
