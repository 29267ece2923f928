#pragma once

#include <cstdint>
#include <vector>

#include "pat/tensor.hpp"

namespace pat {

// Multi-scale SSIM configuration. Defaults follow the canonical construction:
// five dyadic scales with the published exponents, an 11-wide Gaussian window
// with sigma 1.5, K1=0.01, K2=0.03, and unit dynamic range for images
// normalized to [0,1]. When the image is too small for the requested scale
// count, scales are reduced and the leading weights renormalized to sum to 1.
struct MsSsimConfig {
  int64_t scales = 5;
  std::vector<double> scale_weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  int64_t window_width = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// 10 log10(peak^2 / MSE); +infinity for identical inputs.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Mean of the Gaussian-windowed luminance * contrast * structure product over
// all valid (fully interior) window positions. Works on bare 2D/3D tensors.
double ssim(const Tensor& a, const Tensor& b, const MsSsimConfig& cfg = {});

// Weighted geometric product of per-scale contrast/structure means with the
// luminance term at the coarsest scale; factor-2 mean-pool downsampling
// between scales (odd trailing samples cropped).
double ms_ssim(const Tensor& a, const Tensor& b, const MsSsimConfig& cfg = {});

// Histogram threshold maximizing between-class variance; ties broken toward
// the lower threshold. Throws ConfigError for constant images.
double otsu_threshold(const Tensor& image, int64_t bins = 256);

// Fraction of elements strictly above the threshold.
double foreground_fraction(const Tensor& image, double threshold);

// Maximum intensity projection along one axis; that axis is removed.
Tensor mip(const Tensor& volume, int64_t axis);

}  // namespace pat
