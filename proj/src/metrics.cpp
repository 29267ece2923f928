#include "pat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pat {

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (!a.same_shape(b))
    throw DimensionError("psnr: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  if (!(peak > 0.0)) throw ConfigError("psnr: peak must be positive");
  double mse = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

std::vector<double> gaussian_kernel(int64_t width, double sigma) {
  std::vector<double> k(static_cast<size_t>(width));
  double c = (static_cast<double>(width) - 1.0) / 2.0;
  double sum = 0.0;
  for (int64_t i = 0; i < width; ++i) {
    double x = static_cast<double>(i) - c;
    k[static_cast<size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += k[static_cast<size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Valid-region filtering along one axis with the given kernel; the filtered
// axis shrinks by width-1.
Tensor filter_axis_valid(const Tensor& t, const std::vector<double>& kernel, int64_t axis) {
  int64_t width = static_cast<int64_t>(kernel.size());
  std::vector<int64_t> out_shape = t.shape();
  out_shape[static_cast<size_t>(axis)] -= width - 1;
  Tensor out(out_shape);

  std::vector<int64_t> in_stride(t.shape().size(), 1);
  for (int64_t d = static_cast<int64_t>(t.shape().size()) - 2; d >= 0; --d)
    in_stride[static_cast<size_t>(d)] = in_stride[static_cast<size_t>(d + 1)] * t.extent(d + 1);

  int64_t n_out = out_shape[static_cast<size_t>(axis)];
  int64_t st = in_stride[static_cast<size_t>(axis)];
  int64_t lines = out.numel() / n_out;

  std::vector<int64_t> out_strides(out_shape.size(), 1);
  for (int64_t d = static_cast<int64_t>(out_shape.size()) - 2; d >= 0; --d)
    out_strides[static_cast<size_t>(d)] =
        out_strides[static_cast<size_t>(d + 1)] * out_shape[static_cast<size_t>(d + 1)];

  for (int64_t l = 0; l < lines; ++l) {
    // Decompose the line counter over every axis except the filtered one, in
    // row-major order, to get base offsets in both tensors.
    int64_t rest = l;
    int64_t in_base = 0, out_base = 0;
    for (int64_t d = static_cast<int64_t>(out_shape.size()) - 1; d >= 0; --d) {
      if (d == axis) continue;
      int64_t idx = rest % out_shape[static_cast<size_t>(d)];
      rest /= out_shape[static_cast<size_t>(d)];
      in_base += idx * in_stride[static_cast<size_t>(d)];
      out_base += idx * out_strides[static_cast<size_t>(d)];
    }
    const double* src = t.data() + in_base;
    double* dst = out.data() + out_base;
    int64_t out_st = out_strides[static_cast<size_t>(axis)];
    for (int64_t i = 0; i < n_out; ++i) {
      double acc = 0.0;
      for (int64_t j = 0; j < width; ++j)
        acc += kernel[static_cast<size_t>(j)] * src[(i + j) * st];
      dst[i * out_st] = acc;
    }
  }
  return out;
}

Tensor gaussian_filter_valid(const Tensor& t, const std::vector<double>& kernel) {
  Tensor cur = t;
  for (int64_t axis = 0; axis < t.ndim(); ++axis) cur = filter_axis_valid(cur, kernel, axis);
  return cur;
}

struct SsimTerms {
  double mean_ssim = 0.0;  // full luminance * cs
  double mean_cs = 0.0;    // contrast * structure only
};

SsimTerms ssim_terms(const Tensor& a, const Tensor& b, const MsSsimConfig& cfg) {
  if (!a.same_shape(b))
    throw DimensionError("ssim: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  if (cfg.window_width < 1 || cfg.window_width % 2 == 0)
    throw ConfigError("ssim: window width must be odd and positive");
  if (a.ndim() < 2 || a.ndim() > 3)
    throw DimensionError("ssim: expects bare 2D or 3D images, got " + shape_string(a.shape()));
  for (int64_t d = 0; d < a.ndim(); ++d)
    if (a.extent(d) < cfg.window_width)
      throw DimensionError("ssim: image extent " + std::to_string(a.extent(d)) +
                           " smaller than window width " + std::to_string(cfg.window_width));

  std::vector<double> kernel = gaussian_kernel(cfg.window_width, cfg.window_sigma);
  Tensor mu_a = gaussian_filter_valid(a, kernel);
  Tensor mu_b = gaussian_filter_valid(b, kernel);
  Tensor aa = gaussian_filter_valid(mul(a, a), kernel);
  Tensor bb = gaussian_filter_valid(mul(b, b), kernel);
  Tensor ab = gaussian_filter_valid(mul(a, b), kernel);

  double c1 = cfg.k1 * cfg.dynamic_range * cfg.k1 * cfg.dynamic_range;
  double c2 = cfg.k2 * cfg.dynamic_range * cfg.k2 * cfg.dynamic_range;

  double sum_ssim = 0.0, sum_cs = 0.0;
  for (int64_t i = 0; i < mu_a.numel(); ++i) {
    double ma = mu_a[i], mb = mu_b[i];
    double va = aa[i] - ma * ma;
    double vb = bb[i] - mb * mb;
    double cov = ab[i] - ma * mb;
    double lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    double cs = (2.0 * cov + c2) / (va + vb + c2);
    sum_ssim += lum * cs;
    sum_cs += cs;
  }
  SsimTerms t;
  t.mean_ssim = sum_ssim / static_cast<double>(mu_a.numel());
  t.mean_cs = sum_cs / static_cast<double>(mu_a.numel());
  return t;
}

// Factor-2 mean pooling over every axis; odd trailing samples are cropped.
Tensor downsample2(const Tensor& t) {
  std::vector<int64_t> out_shape = t.shape();
  for (int64_t& e : out_shape) e /= 2;
  Tensor out(out_shape);

  std::vector<int64_t> in_stride(t.shape().size(), 1);
  for (int64_t d = static_cast<int64_t>(t.shape().size()) - 2; d >= 0; --d)
    in_stride[static_cast<size_t>(d)] = in_stride[static_cast<size_t>(d + 1)] * t.extent(d + 1);

  int64_t dims = t.ndim();
  double inv = 1.0 / static_cast<double>(int64_t(1) << dims);
  std::vector<int64_t> idx(static_cast<size_t>(dims), 0);
  for (int64_t o = 0; o < out.numel(); ++o) {
    int64_t base = 0;
    for (int64_t d = 0; d < dims; ++d)
      base += 2 * idx[static_cast<size_t>(d)] * in_stride[static_cast<size_t>(d)];
    double acc = 0.0;
    for (int64_t corner = 0; corner < (int64_t(1) << dims); ++corner) {
      int64_t off = base;
      for (int64_t d = 0; d < dims; ++d)
        if (corner & (int64_t(1) << d)) off += in_stride[static_cast<size_t>(d)];
      acc += t[off];
    }
    out[o] = acc * inv;
    int64_t d = dims - 1;
    while (d >= 0 && ++idx[static_cast<size_t>(d)] == out_shape[static_cast<size_t>(d)])
      idx[static_cast<size_t>(d--)] = 0;
  }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, const MsSsimConfig& cfg) {
  return ssim_terms(a, b, cfg).mean_ssim;
}

double ms_ssim(const Tensor& a, const Tensor& b, const MsSsimConfig& cfg) {
  if (cfg.scales < 1) throw ConfigError("ms_ssim: scales must be positive");
  if (static_cast<int64_t>(cfg.scale_weights.size()) != cfg.scales)
    throw ConfigError("ms_ssim: need exactly one weight per scale");
  if (!a.same_shape(b))
    throw DimensionError("ms_ssim: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));

  // Largest usable scale count for these extents: every axis must still hold
  // one window at the coarsest scale.
  int64_t max_scales = 0;
  {
    std::vector<int64_t> e = a.shape();
    for (int64_t m = 0; m < cfg.scales; ++m) {
      int64_t smallest = *std::min_element(e.begin(), e.end());
      if (smallest < cfg.window_width) break;
      max_scales = m + 1;
      for (int64_t& x : e) x /= 2;
    }
  }
  if (max_scales < 1)
    throw DimensionError("ms_ssim: image " + shape_string(a.shape()) +
                         " smaller than the window width " + std::to_string(cfg.window_width));

  int64_t scales = std::min(cfg.scales, max_scales);
  double weight_sum = 0.0;
  for (int64_t m = 0; m < scales; ++m) weight_sum += cfg.scale_weights[static_cast<size_t>(m)];
  if (!(weight_sum > 0.0)) throw ConfigError("ms_ssim: scale weights must sum to a positive value");

  Tensor ca = a, cb = b;
  double result = 1.0;
  for (int64_t m = 0; m < scales; ++m) {
    SsimTerms terms = ssim_terms(ca, cb, cfg);
    double w = cfg.scale_weights[static_cast<size_t>(m)] / weight_sum;
    double factor = m + 1 == scales ? terms.mean_ssim : terms.mean_cs;
    factor = std::max(factor, 0.0);  // geometric combination needs non-negative factors
    result *= std::pow(factor, w);
    if (m + 1 < scales) {
      ca = downsample2(ca);
      cb = downsample2(cb);
    }
  }
  return result;
}

double otsu_threshold(const Tensor& image, int64_t bins) {
  if (bins < 2) throw ConfigError("otsu_threshold: need at least 2 bins");
  double lo = image.min_value();
  double hi = image.max_value();
  if (!(hi > lo))
    throw ConfigError("otsu_threshold: constant image has no separable classes");

  std::vector<int64_t> hist(static_cast<size_t>(bins), 0);
  double scale = static_cast<double>(bins) / (hi - lo);
  for (int64_t i = 0; i < image.numel(); ++i) {
    int64_t b = static_cast<int64_t>((image[i] - lo) * scale);
    if (b >= bins) b = bins - 1;
    if (b < 0) b = 0;
    ++hist[static_cast<size_t>(b)];
  }

  double total = static_cast<double>(image.numel());
  double grand_mean = 0.0;
  for (int64_t b = 0; b < bins; ++b)
    grand_mean += (static_cast<double>(b) + 0.5) * static_cast<double>(hist[static_cast<size_t>(b)]);
  grand_mean /= total;

  // Split after bin k: class 0 holds bins [0, k], class 1 the rest.
  double best_var = -1.0;
  int64_t best_k = 0;
  double w0 = 0.0, sum0 = 0.0;
  for (int64_t k = 0; k + 1 < bins; ++k) {
    double h = static_cast<double>(hist[static_cast<size_t>(k)]);
    w0 += h;
    sum0 += (static_cast<double>(k) + 0.5) * h;
    if (w0 == 0.0 || w0 == total) continue;
    double m0 = sum0 / w0;
    double w1 = total - w0;
    double m1 = (grand_mean * total - sum0) / w1;
    double var = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (var > best_var + 1e-12 * std::max(1.0, best_var)) {
      best_var = var;
      best_k = k;
    }
  }
  if (best_var < 0.0)
    throw ConfigError("otsu_threshold: histogram mass in a single bin; no separable classes");
  return lo + (static_cast<double>(best_k) + 1.0) / static_cast<double>(bins) * (hi - lo);
}

double foreground_fraction(const Tensor& image, double threshold) {
  int64_t n = 0;
  for (int64_t i = 0; i < image.numel(); ++i)
    if (image[i] > threshold) ++n;
  return static_cast<double>(n) / static_cast<double>(image.numel());
}

Tensor mip(const Tensor& volume, int64_t axis) {
  if (axis < 0 || axis >= volume.ndim())
    throw DimensionError("mip: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_string(volume.shape()));
  if (volume.ndim() < 2)
    throw DimensionError("mip: need at least 2 dimensions");

  std::vector<int64_t> out_shape;
  for (int64_t d = 0; d < volume.ndim(); ++d)
    if (d != axis) out_shape.push_back(volume.extent(d));
  Tensor out(out_shape);
  out.fill(-std::numeric_limits<double>::infinity());

  std::vector<int64_t> in_stride(volume.shape().size(), 1);
  for (int64_t d = volume.ndim() - 2; d >= 0; --d)
    in_stride[static_cast<size_t>(d)] = in_stride[static_cast<size_t>(d + 1)] * volume.extent(d + 1);

  int64_t n_axis = volume.extent(axis);
  int64_t st = in_stride[static_cast<size_t>(axis)];
  for (int64_t o = 0; o < out.numel(); ++o) {
    // Decompose o over the kept axes to find the column base.
    int64_t rest = o;
    int64_t base = 0;
    for (int64_t d = volume.ndim() - 1; d >= 0; --d) {
      if (d == axis) continue;
      int64_t idx = rest % volume.extent(d);
      rest /= volume.extent(d);
      base += idx * in_stride[static_cast<size_t>(d)];
    }
    double best = -std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < n_axis; ++i) best = std::max(best, volume[base + i * st]);
    out[o] = best;
  }
  return out;
}

}  // namespace pat
