#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vdepth/tensor.hpp"

namespace vdepth {

struct SpatialMetrics {
  double rel = 0, rms = 0, log10 = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;
  std::size_t n_pixels = 0;
};

/// Pools Rel, RMS, log10 and the delta accuracies over every valid pixel
/// added, across any number of maps.
class SpatialAccumulator {
 public:
  /// d and g of equal shape; mask of the same shape, nonzero = valid. Valid
  /// pixels need g > 0 and d > 0.
  void add(const Tensor<float>& d, const Tensor<float>& g, const Mask& mask);
  void add(const Tensor<double>& d, const Tensor<double>& g, const Mask& mask);
  void merge(const SpatialAccumulator& other);
  std::size_t count() const { return n_; }
  /// Throws DegenerateInputError when no valid pixel was added.
  SpatialMetrics result() const;

 private:
  template <typename T>
  void add_impl(const Tensor<T>& d, const Tensor<T>& g, const Mask& mask);

  std::size_t n_ = 0;
  double abs_rel_ = 0, sq_ = 0, log10_ = 0;
  std::size_t within_[3] = {0, 0, 0};
};

template <typename T>
SpatialMetrics spatial_metrics(const std::vector<Tensor<T>>& d, const std::vector<Tensor<T>>& g,
                               const std::vector<Mask>& masks);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;
};

/// Local SSIM at every pixel of two [H, W] images. The Gaussian window is
/// truncated at the border and renormalized over the pixels inside.
Tensor<double> ssim_map(const Tensor<double>& a, const Tensor<double>& b, double dynamic_range,
                        const SsimOptions& options = {});

/// Mean of ssim_map over all pixels, or over the pixels where mask != 0.
double ssim(const Tensor<double>& a, const Tensor<double>& b, double dynamic_range, const SsimOptions& options = {});
double ssim(const Tensor<double>& a, const Tensor<double>& b, double dynamic_range, const Mask& mask,
            const SsimOptions& options = {});

struct FlowField {
  Tensor<double> u, v;  ///< [H, W], pixels per frame
  bool converged = false;
};

struct TvL1Options {
  std::size_t levels = 3;
  double scale = 0.5;
  std::size_t warps = 5;
  std::size_t iterations = 50;  ///< inner primal-dual iterations per warp
  double lambda = 0.15;
  double theta = 0.3;
  double tau = 0.25;
  double epsilon = 0.01;  ///< stopping threshold on the RMS update of the flow
};

/// Dense TV-L1 flow from a to b: b(x + flow(x)) ~ a(x). Inputs are [H, W]
/// in [0, 1]; they are jointly rescaled to [0, 255] internally.
/// `converged` reports whether the last inner loop on the finest level met
/// the stopping threshold before running out of iterations.
FlowField optical_flow(const Tensor<double>& a, const Tensor<double>& b, const TvL1Options& options = {});

struct TemporalOptions {
  double depth_range = 10.0;  ///< SSIM dynamic range for depth differences, meters
  double flow_range = 2.0;  ///< SSIM dynamic range for flow components, pixels
  TvL1Options flow;
};

/// Mean over consecutive pairs of SSIM(|d_i - d_i+1|, |g_i - g_i+1|). With
/// masks (one per frame, may be empty) differences are zeroed where either
/// frame is invalid and SSIM is averaged over pixels valid in both.
double tcc(const std::vector<Tensor<double>>& d, const std::vector<Tensor<double>>& g,
           const std::vector<Mask>& masks = {}, const TemporalOptions& options = {});

/// Depth maps mapped to [0, 1] by depth_range before flow estimation.
FlowField depth_flow(const Tensor<double>& d0, const Tensor<double>& d1, const TemporalOptions& options = {});

/// Mean over consecutive pairs of the SSIM between predicted and reference
/// flow fields, averaged over the u and v components.
double tmc(const std::vector<Tensor<double>>& d, const std::vector<Tensor<double>>& g,
           const TemporalOptions& options = {});
/// Same, with the reference flows already computed (one per pair).
double tmc(const std::vector<Tensor<double>>& d, const std::vector<FlowField>& g_flows,
           const TemporalOptions& options = {});

struct MetricReport {
  double rel = 0, rms = 0, log10 = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;
  double tcc = 0, tmc = 0;
  std::size_t n_pixels = 0;
  std::size_t n_sequences = 0;

  /// One `key=value` per line.
  std::string to_text() const;
  std::string to_json() const;
  static MetricReport from_json(const std::string& json);
  void write(const std::filesystem::path& text_path, const std::filesystem::path& json_path) const;
  void validate() const;
};

}  // namespace vdepth
