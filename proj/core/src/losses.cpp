#include "vdepth/losses.hpp"

#include <cmath>

#include "vdepth/error.hpp"
#include "vdepth/ops.hpp"

namespace vdepth {

namespace {

enum class Term { Depth, Grad, Normal };

struct Grid {
  std::size_t maps, h, w;
};

template <typename T>
Grid check_maps(const Tensor<T>& d, const Tensor<T>& g, const Mask& mask, Term term) {
  VDEPTH_REQUIRE(d.rank() >= 2, "loss: depth maps need at least 2 axes, got " + shape_to_string(d.shape()));
  VDEPTH_REQUIRE(d.shape() == g.shape(), "loss: prediction " + shape_to_string(d.shape()) + " vs target " +
                                             shape_to_string(g.shape()));
  VDEPTH_REQUIRE(mask.shape() == d.shape(), "loss: mask shape " + shape_to_string(mask.shape()) + " differs");
  const std::size_t h = d.dim(d.rank() - 2), w = d.dim(d.rank() - 1);
  if (term != Term::Depth) VDEPTH_REQUIRE(h >= 2 && w >= 2, "loss: gradient terms need maps of at least 2x2");
  return {h * w == 0 ? 0 : d.size() / (h * w), h, w};
}

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Mean of one term; when grad is non-null it receives d(mean)/d(d).
template <typename T>
double evaluate(Term term, const Tensor<T>& d, const Tensor<T>& g, const Mask& mask, double eps, double* grad) {
  const Grid grid = check_maps(d, g, mask, term);
  const std::size_t h = grid.h, w = grid.w, plane = h * w;
  double total = 0.0;
  std::size_t count = 0;
  auto pass = [&](auto&& visit) {
    for (std::size_t n = 0; n < grid.maps; ++n)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const std::size_t p = n * plane + i * w + j;
          const std::size_t px = n * plane + i * w + std::min(j + 1, w - 1);
          const std::size_t py = n * plane + std::min(i + 1, h - 1) * w + j;
          if (!mask[p]) continue;
          if (term != Term::Depth && (!mask[px] || !mask[py])) continue;
          visit(p, px, py);
        }
  };
  pass([&](std::size_t, std::size_t, std::size_t) { ++count; });
  if (count == 0) throw DegenerateInputError("loss: mask selects no valid pixel");
  const double inv = 1.0 / static_cast<double>(count);

  auto at = [](const Tensor<T>& t, std::size_t i) { return static_cast<double>(t[i]); };
  if (term == Term::Depth) {
    pass([&](std::size_t p, std::size_t, std::size_t) {
      const double e = at(d, p) - at(g, p);
      total += std::log1p(std::abs(e));
      if (grad) grad[p] += inv * sgn(e) / (std::abs(e) + 1.0);
    });
  } else if (term == Term::Grad) {
    pass([&](std::size_t p, std::size_t px, std::size_t py) {
      const double ex = (at(d, px) - at(d, p)) - (at(g, px) - at(g, p));
      const double ey = (at(d, py) - at(d, p)) - (at(g, py) - at(g, p));
      total += std::log1p(std::abs(ex)) + std::log1p(std::abs(ey));
      if (grad) {
        const double sx = inv * sgn(ex) / (std::abs(ex) + 1.0);
        const double sy = inv * sgn(ey) / (std::abs(ey) + 1.0);
        grad[px] += sx;
        grad[p] -= sx;
        grad[py] += sy;
        grad[p] -= sy;
      }
    });
  } else {
    pass([&](std::size_t p, std::size_t px, std::size_t py) {
      const double dx = at(d, px) - at(d, p), dy = at(d, py) - at(d, p);
      const double gx = at(g, px) - at(g, p), gy = at(g, py) - at(g, p);
      const double dot = dx * gx + dy * gy + 1.0;
      const double a = dx * dx + dy * dy + 1.0;
      const double b = gx * gx + gy * gy + 1.0;
      // sqrt(a * a) == a exactly, so equal maps give a cosine of exactly 1.
      const double denom = std::max(std::sqrt(a * b), eps);
      total += 1.0 - dot / denom;
      if (grad) {
        // d(-cos)/d(dx) with cos = dot / (nd ng).
        const double nd = std::sqrt(a);
        const double k = inv / denom;
        const double cx = -k * (gx - dot * dx / (nd * nd));
        const double cy = -k * (gy - dot * dy / (nd * nd));
        grad[px] += cx;
        grad[p] -= cx;
        grad[py] += cy;
        grad[p] -= cy;
      }
    });
  }
  return total * inv;
}

template <typename T>
Var<T> term_var(Term term, const Var<T>& d, const Tensor<T>& g, const Mask& mask, double eps) {
  const double value = evaluate(term, d.value(), g, mask, eps, nullptr);
  return make_result<T>(Tensor<T>({1}, static_cast<T>(value)), {d}, [term, g, mask, eps](Node<T>& out) {
    auto& in = *out.inputs[0];
    std::vector<double> grad(in.value.size(), 0.0);
    evaluate(term, in.value, g, mask, eps, grad.data());
    const double s = static_cast<double>(out.grad[0]);
    auto& buf = in.grad_buffer();
    for (std::size_t i = 0; i < grad.size(); ++i) buf[i] += static_cast<T>(s * grad[i]);
  });
}

}  // namespace

void SpatialLossConfig::validate() const {
  auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
  VDEPTH_REQUIRE(ok(lambda), "SpatialLossConfig.lambda must be finite and >= 0");
  VDEPTH_REQUIRE(ok(mu), "SpatialLossConfig.mu must be finite and >= 0");
  VDEPTH_REQUIRE(ok(alpha), "SpatialLossConfig.alpha must be finite and >= 0");
  VDEPTH_REQUIRE(ok(eps_normal), "SpatialLossConfig.eps_normal must be finite and >= 0");
}

template <typename T>
Tensor<T> log_l1(const Tensor<T>& x, const Tensor<T>& y) {
  VDEPTH_REQUIRE(x.shape() == y.shape(), "log_l1: shape mismatch");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>(log_l1(x[i], y[i]));
  return out;
}

template <typename T>
double depth_loss(const Tensor<T>& d, const Tensor<T>& g, const Mask& mask) {
  return evaluate(Term::Depth, d, g, mask, 0.0, nullptr);
}

template <typename T>
double grad_loss(const Tensor<T>& d, const Tensor<T>& g, const Mask& mask) {
  return evaluate(Term::Grad, d, g, mask, 0.0, nullptr);
}

template <typename T>
double normal_loss(const Tensor<T>& d, const Tensor<T>& g, const Mask& mask, double eps) {
  return evaluate(Term::Normal, d, g, mask, eps, nullptr);
}

template <typename T>
double spatial_loss(const Tensor<T>& d, const Tensor<T>& g, const Mask& mask, const SpatialLossConfig& config) {
  config.validate();
  return depth_loss(d, g, mask) + config.lambda * grad_loss(d, g, mask) +
         config.mu * normal_loss(d, g, mask, config.eps_normal);
}

template <typename T>
Var<T> depth_loss(const Var<T>& d, const Tensor<T>& g, const Mask& mask) {
  return term_var(Term::Depth, d, g, mask, 0.0);
}

template <typename T>
Var<T> grad_loss(const Var<T>& d, const Tensor<T>& g, const Mask& mask) {
  return term_var(Term::Grad, d, g, mask, 0.0);
}

template <typename T>
Var<T> normal_loss(const Var<T>& d, const Tensor<T>& g, const Mask& mask, double eps) {
  return term_var(Term::Normal, d, g, mask, eps);
}

template <typename T>
SpatialLossTerms<T> spatial_loss_terms(const Var<T>& d, const Tensor<T>& g, const Mask& mask,
                                       const SpatialLossConfig& config) {
  config.validate();
  SpatialLossTerms<T> t;
  t.depth = depth_loss(d, g, mask);
  t.grad = grad_loss(d, g, mask);
  t.normal = normal_loss(d, g, mask, config.eps_normal);
  t.spatial = ops::add(ops::add(t.depth, ops::scale(t.grad, static_cast<T>(config.lambda))),
                       ops::scale(t.normal, static_cast<T>(config.mu)));
  return t;
}

template <typename T>
Var<T> total_loss(const Var<T>& spatial, const Var<T>& temporal, const SpatialLossConfig& config) {
  config.validate();
  return ops::add(spatial, ops::scale(temporal, static_cast<T>(config.alpha)));
}

#define VDEPTH_INSTANTIATE(T)                                                                                   \
  template Tensor<T> log_l1(const Tensor<T>&, const Tensor<T>&);                                              \
  template double depth_loss(const Tensor<T>&, const Tensor<T>&, const Mask&);                               \
  template double grad_loss(const Tensor<T>&, const Tensor<T>&, const Mask&);                                \
  template double normal_loss(const Tensor<T>&, const Tensor<T>&, const Mask&, double);                      \
  template double spatial_loss(const Tensor<T>&, const Tensor<T>&, const Mask&, const SpatialLossConfig&);    \
  template Var<T> depth_loss(const Var<T>&, const Tensor<T>&, const Mask&);                                  \
  template Var<T> grad_loss(const Var<T>&, const Tensor<T>&, const Mask&);                                   \
  template Var<T> normal_loss(const Var<T>&, const Tensor<T>&, const Mask&, double);                         \
  template SpatialLossTerms<T> spatial_loss_terms(const Var<T>&, const Tensor<T>&, const Mask&,              \
                                                  const SpatialLossConfig&);                                  \
  template Var<T> total_loss(const Var<T>&, const Var<T>&, const SpatialLossConfig&);

VDEPTH_INSTANTIATE(float)
VDEPTH_INSTANTIATE(double)

}  // namespace vdepth
