#include "pat/conv.hpp"

#include <algorithm>
#include <cstring>

#include "pat/parallel.hpp"

namespace pat {

namespace {

std::vector<int64_t> broadcast_per_dim(const std::vector<int64_t>& v, int64_t dims,
                                       const char* what) {
  if (v.empty()) return std::vector<int64_t>(static_cast<size_t>(dims), 1);
  if (v.size() == 1) return std::vector<int64_t>(static_cast<size_t>(dims), v[0]);
  if (static_cast<int64_t>(v.size()) != dims)
    throw ConfigError(std::string(what) + " must have one entry or one per spatial dimension");
  return v;
}

struct Geometry {
  int64_t dims = 0;
  int64_t batch = 0;
  std::vector<int64_t> in_sp, out_sp, stride, dilation, pad;
  std::vector<int64_t> in_stride, out_stride;  // row-major spatial strides
  int64_t in_plane = 0, out_plane = 0, kernel_taps = 0;
};

std::vector<int64_t> row_major_strides(const std::vector<int64_t>& extents) {
  std::vector<int64_t> s(extents.size(), 1);
  for (int64_t d = static_cast<int64_t>(extents.size()) - 2; d >= 0; --d)
    s[d] = s[d + 1] * extents[d + 1];
  return s;
}

int64_t product(const std::vector<int64_t>& v) {
  int64_t p = 1;
  for (int64_t e : v) p *= e;
  return p;
}

void check_input_tensor(const Tensor& input, const ConvSpec& spec, const char* op) {
  int64_t dims = spec.spatial_dims();
  if (input.ndim() != dims + 2)
    throw DimensionError(std::string(op) + ": input must be (batch, channels, " +
                         std::to_string(dims) + " spatial dims), got " +
                         shape_string(input.shape()));
  if (input.extent(1) != spec.in_channels)
    throw DimensionError(std::string(op) + ": input has " + std::to_string(input.extent(1)) +
                         " channels, spec expects " + std::to_string(spec.in_channels));
}

void check_weights(const Tensor& weights, const ConvSpec& spec, bool transposed, const char* op) {
  std::vector<int64_t> want = transposed
                                  ? std::vector<int64_t>{spec.in_channels, spec.out_channels}
                                  : std::vector<int64_t>{spec.out_channels, spec.in_channels};
  want.insert(want.end(), spec.kernel_shape.begin(), spec.kernel_shape.end());
  if (weights.shape() != want)
    throw DimensionError(std::string(op) + ": weights shaped " + shape_string(weights.shape()) +
                         ", expected " + shape_string(want));
}

void check_bias(const Tensor* bias, const ConvSpec& spec, const char* op) {
  if (spec.bias) {
    if (!bias) throw ConfigError(std::string(op) + ": spec requires a bias tensor");
    if (bias->shape() != std::vector<int64_t>{spec.out_channels})
      throw DimensionError(std::string(op) + ": bias shaped " + shape_string(bias->shape()) +
                           ", expected (" + std::to_string(spec.out_channels) + ")");
  } else if (bias) {
    throw ConfigError(std::string(op) + ": bias tensor given but spec.bias is false");
  }
}

Geometry make_geometry(const ConvSpec& spec, const Tensor& input) {
  Geometry g;
  g.dims = spec.spatial_dims();
  g.batch = input.extent(0);
  g.in_sp.assign(input.shape().begin() + 2, input.shape().end());
  g.stride = spec.strides_or_ones();
  g.dilation = spec.dilations_or_ones();
  g.out_sp = conv_output_extents(spec, g.in_sp);
  g.pad = conv_pad_left(spec, g.in_sp);
  g.in_stride = row_major_strides(g.in_sp);
  g.out_stride = row_major_strides(g.out_sp);
  g.in_plane = product(g.in_sp);
  g.out_plane = product(g.out_sp);
  g.kernel_taps = product(spec.kernel_shape);
  return g;
}

// Output index range [lo, hi) along one dimension for which the tap read
// position o*stride + off stays inside [0, extent).
inline bool tap_range(int64_t off, int64_t stride, int64_t extent, int64_t out_extent,
                      int64_t& lo, int64_t& hi) {
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  int64_t top = extent - 1 - off;
  if (top < 0) return false;
  hi = std::min(out_extent, top / stride + 1);
  return lo < hi;
}

// The three inner kernels. `a` iterates contiguously, `b` with step `bs`.
inline void axpy_rows(double* a, const double* b, int64_t bs, int64_t n, double w) {
  if (bs == 1) {
    for (int64_t i = 0; i < n; ++i) a[i] += w * b[i];
  } else {
    for (int64_t i = 0; i < n; ++i) a[i] += w * b[i * bs];
  }
}

inline void scatter_rows(double* b, int64_t bs, const double* a, int64_t n, double w) {
  if (bs == 1) {
    for (int64_t i = 0; i < n; ++i) b[i] += w * a[i];
  } else {
    for (int64_t i = 0; i < n; ++i) b[i * bs] += w * a[i];
  }
}

inline double dot_rows(const double* a, const double* b, int64_t bs, int64_t n) {
  double acc = 0.0;
  if (bs == 1) {
    for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  } else {
    for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i * bs];
  }
  return acc;
}

enum class TapOp { Gather, Scatter, Dot };

// Core of every convolution variant: for one kernel tap with per-dim offsets
// off[], walk the output index box that keeps reads/writes in bounds.
// Gather:  out[o] += w * in[o*stride + off]
// Scatter: in[o*stride + off] += w * out[o]
// Dot:     acc += out[o] * in[o*stride + off]
inline double for_each_tap_row(TapOp op, double* out_plane, double* in_plane, double w,
                               const Geometry& g, const int64_t* off) {
  int64_t lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
  for (int64_t d = 0; d < g.dims; ++d)
    if (!tap_range(off[d], g.stride[d], g.in_sp[d], g.out_sp[d], lo[d], hi[d])) return 0.0;

  int64_t last = g.dims - 1;
  int64_t n = hi[last] - lo[last];
  int64_t bs = g.stride[last];
  double acc = 0.0;

  auto run_row = [&](int64_t out_base, int64_t in_base) {
    double* o = out_plane + out_base + lo[last];
    double* i = in_plane + in_base + lo[last] * bs + off[last];
    switch (op) {
      case TapOp::Gather: axpy_rows(o, i, bs, n, w); break;
      case TapOp::Scatter: scatter_rows(i, bs, o, n, w); break;
      case TapOp::Dot: acc += dot_rows(o, i, bs, n); break;
    }
  };

  if (g.dims == 1) {
    run_row(0, 0);
  } else if (g.dims == 2) {
    for (int64_t y = lo[0]; y < hi[0]; ++y)
      run_row(y * g.out_stride[0], (y * g.stride[0] + off[0]) * g.in_stride[0]);
  } else {
    for (int64_t z = lo[0]; z < hi[0]; ++z)
      for (int64_t y = lo[1]; y < hi[1]; ++y)
        run_row(z * g.out_stride[0] + y * g.out_stride[1],
                (z * g.stride[0] + off[0]) * g.in_stride[0] +
                    (y * g.stride[1] + off[1]) * g.in_stride[1]);
  }
  return acc;
}

// Iterates kernel taps in row-major order, yielding per-dim offsets
// off[d] = k[d]*dilation[d] - pad[d].
struct TapIter {
  const Geometry& g;
  const std::vector<int64_t>& kernel;
  int64_t k[3] = {0, 0, 0};
  int64_t off[3] = {0, 0, 0};
  explicit TapIter(const Geometry& geom, const std::vector<int64_t>& kernel_shape)
      : g(geom), kernel(kernel_shape) {
    for (int64_t d = 0; d < g.dims; ++d) off[d] = -g.pad[d];
  }
  bool next() {
    int64_t d = g.dims - 1;
    while (d >= 0) {
      if (++k[d] < kernel[d]) {
        off[d] = k[d] * g.dilation[d] - g.pad[d];
        return true;
      }
      k[d] = 0;
      off[d] = -g.pad[d];
      --d;
    }
    return false;
  }
};

}  // namespace

std::vector<int64_t> ConvSpec::strides_or_ones() const {
  return broadcast_per_dim(stride, spatial_dims(), "stride");
}

std::vector<int64_t> ConvSpec::dilations_or_ones() const {
  return broadcast_per_dim(dilation_rate, spatial_dims(), "dilation_rate");
}

void validate_conv_spec(const ConvSpec& spec) {
  int64_t dims = spec.spatial_dims();
  if (dims < 1 || dims > 3)
    throw ConfigError("convolution supports 1 to 3 spatial dimensions, got " +
                      std::to_string(dims));
  for (int64_t k : spec.kernel_shape)
    if (k < 1) throw ConfigError("kernel extents must be positive");
  for (int64_t s : spec.strides_or_ones())
    if (s < 1) throw ConfigError("stride must be positive");
  for (int64_t r : spec.dilations_or_ones())
    if (r < 1) throw ConfigError("dilation_rate must be positive");
  if (spec.in_channels < 1 || spec.out_channels < 1)
    throw ConfigError("channel counts must be positive");
}

std::vector<int64_t> conv_output_extents(const ConvSpec& spec,
                                         const std::vector<int64_t>& in_spatial) {
  validate_conv_spec(spec);
  int64_t dims = spec.spatial_dims();
  if (static_cast<int64_t>(in_spatial.size()) != dims)
    throw DimensionError("input has " + std::to_string(in_spatial.size()) +
                         " spatial dims, kernel has " + std::to_string(dims));
  std::vector<int64_t> stride = spec.strides_or_ones();
  std::vector<int64_t> dilation = spec.dilations_or_ones();
  std::vector<int64_t> out(static_cast<size_t>(dims));
  for (int64_t d = 0; d < dims; ++d) {
    int64_t eff = dilation[d] * (spec.kernel_shape[d] - 1) + 1;
    if (spec.padding == Padding::Valid) {
      if (in_spatial[d] < eff)
        throw DimensionError("effective kernel extent " + std::to_string(eff) +
                             " does not fit input extent " + std::to_string(in_spatial[d]) +
                             " in spatial dimension " + std::to_string(d));
      out[d] = (in_spatial[d] - eff) / stride[d] + 1;
    } else {
      out[d] = (in_spatial[d] + stride[d] - 1) / stride[d];
    }
  }
  return out;
}

std::vector<int64_t> conv_pad_left(const ConvSpec& spec, const std::vector<int64_t>& in_spatial) {
  std::vector<int64_t> out = conv_output_extents(spec, in_spatial);
  std::vector<int64_t> stride = spec.strides_or_ones();
  std::vector<int64_t> dilation = spec.dilations_or_ones();
  std::vector<int64_t> pad(out.size(), 0);
  if (spec.padding == Padding::SameZero) {
    for (size_t d = 0; d < out.size(); ++d) {
      int64_t eff = dilation[d] * (spec.kernel_shape[d] - 1) + 1;
      int64_t total = std::max<int64_t>(0, (out[d] - 1) * stride[d] + eff - in_spatial[d]);
      pad[d] = total / 2;
    }
  }
  return pad;
}

Tensor conv_nd(const Tensor& input, const Tensor& weights, const Tensor* bias,
               const ConvSpec& spec) {
  validate_conv_spec(spec);
  check_input_tensor(input, spec, "conv_nd");
  check_weights(weights, spec, false, "conv_nd");
  check_bias(bias, spec, "conv_nd");

  Geometry g = make_geometry(spec, input);
  std::vector<int64_t> out_shape = {g.batch, spec.out_channels};
  out_shape.insert(out_shape.end(), g.out_sp.begin(), g.out_sp.end());
  Tensor out(out_shape, input.precision());

  const double* in = input.data();
  const double* w = weights.data();
  const double* bs = bias ? bias->data() : nullptr;
  double* o = out.data();
  int64_t ic_count = spec.in_channels;
  int64_t oc_count = spec.out_channels;

  parallel_for(0, g.batch * oc_count, [&](int64_t plane) {
    int64_t b = plane / oc_count;
    int64_t oc = plane % oc_count;
    double* out_plane = o + plane * g.out_plane;
    std::fill(out_plane, out_plane + g.out_plane, bs ? bs[oc] : 0.0);
    for (int64_t ic = 0; ic < ic_count; ++ic) {
      double* in_plane = const_cast<double*>(in) + (b * ic_count + ic) * g.in_plane;
      const double* wp = w + (oc * ic_count + ic) * g.kernel_taps;
      TapIter tap(g, spec.kernel_shape);
      int64_t t = 0;
      do {
        for_each_tap_row(TapOp::Gather, out_plane, in_plane, wp[t++], g, tap.off);
      } while (tap.next());
    }
  });
  return out;
}

Tensor conv_grad_input(const Tensor& grad_output, const Tensor& weights, const ConvSpec& spec,
                       const std::vector<int64_t>& in_spatial) {
  validate_conv_spec(spec);
  check_weights(weights, spec, false, "conv_grad_input");
  std::vector<int64_t> out_sp = conv_output_extents(spec, in_spatial);
  if (grad_output.ndim() != spec.spatial_dims() + 2 || grad_output.extent(1) != spec.out_channels)
    throw DimensionError("conv_grad_input: gradient shaped " + shape_string(grad_output.shape()) +
                         " does not match spec");
  for (int64_t d = 0; d < spec.spatial_dims(); ++d)
    if (grad_output.extent(d + 2) != out_sp[static_cast<size_t>(d)])
      throw DimensionError("conv_grad_input: gradient spatial extents do not match the forward "
                           "output for input " +
                           shape_string(in_spatial));

  std::vector<int64_t> in_shape = {grad_output.extent(0), spec.in_channels};
  in_shape.insert(in_shape.end(), in_spatial.begin(), in_spatial.end());
  Tensor grad_in(in_shape, grad_output.precision());

  // Borrow the forward geometry by faking an input tensor shape.
  Geometry g;
  {
    ConvSpec s = spec;
    g.dims = s.spatial_dims();
    g.batch = grad_output.extent(0);
    g.in_sp = in_spatial;
    g.stride = s.strides_or_ones();
    g.dilation = s.dilations_or_ones();
    g.out_sp = out_sp;
    g.pad = conv_pad_left(s, in_spatial);
    g.in_stride = row_major_strides(g.in_sp);
    g.out_stride = row_major_strides(g.out_sp);
    g.in_plane = product(g.in_sp);
    g.out_plane = product(g.out_sp);
    g.kernel_taps = product(s.kernel_shape);
  }

  const double* go = grad_output.data();
  const double* w = weights.data();
  double* gi = grad_in.data();
  int64_t ic_count = spec.in_channels;
  int64_t oc_count = spec.out_channels;

  parallel_for(0, g.batch * ic_count, [&](int64_t plane) {
    int64_t b = plane / ic_count;
    int64_t ic = plane % ic_count;
    double* gi_plane = gi + plane * g.in_plane;
    for (int64_t oc = 0; oc < oc_count; ++oc) {
      double* go_plane = const_cast<double*>(go) + (b * oc_count + oc) * g.out_plane;
      const double* wp = w + (oc * ic_count + ic) * g.kernel_taps;
      TapIter tap(g, spec.kernel_shape);
      int64_t t = 0;
      do {
        for_each_tap_row(TapOp::Scatter, go_plane, gi_plane, wp[t++], g, tap.off);
      } while (tap.next());
    }
  });
  return grad_in;
}

Tensor conv_grad_weights(const Tensor& grad_output, const Tensor& input, const ConvSpec& spec) {
  validate_conv_spec(spec);
  check_input_tensor(input, spec, "conv_grad_weights");
  Geometry g = make_geometry(spec, input);
  if (grad_output.extent(0) != g.batch || grad_output.extent(1) != spec.out_channels)
    throw DimensionError("conv_grad_weights: gradient shaped " +
                         shape_string(grad_output.shape()) + " does not match spec");
  for (int64_t d = 0; d < g.dims; ++d)
    if (grad_output.extent(d + 2) != g.out_sp[static_cast<size_t>(d)])
      throw DimensionError("conv_grad_weights: gradient spatial extents mismatch");

  std::vector<int64_t> w_shape = {spec.out_channels, spec.in_channels};
  w_shape.insert(w_shape.end(), spec.kernel_shape.begin(), spec.kernel_shape.end());
  Tensor grad_w(w_shape, input.precision());

  const double* go = grad_output.data();
  const double* in = input.data();
  double* gw = grad_w.data();
  int64_t ic_count = spec.in_channels;
  int64_t oc_count = spec.out_channels;

  parallel_for(0, oc_count * ic_count, [&](int64_t pair) {
    int64_t oc = pair / ic_count;
    int64_t ic = pair % ic_count;
    double* gw_tap = gw + pair * g.kernel_taps;
    TapIter tap(g, spec.kernel_shape);
    int64_t t = 0;
    do {
      double acc = 0.0;
      for (int64_t b = 0; b < g.batch; ++b) {
        double* go_plane = const_cast<double*>(go) + (b * oc_count + oc) * g.out_plane;
        double* in_plane = const_cast<double*>(in) + (b * ic_count + ic) * g.in_plane;
        acc += for_each_tap_row(TapOp::Dot, go_plane, in_plane, 0.0, g, tap.off);
      }
      gw_tap[t++] = acc;
    } while (tap.next());
  });
  return grad_w;
}

Tensor conv_grad_bias(const Tensor& grad_output) {
  if (grad_output.ndim() < 2)
    throw DimensionError("conv_grad_bias: need (batch, channels, ...) gradient");
  int64_t batch = grad_output.extent(0);
  int64_t channels = grad_output.extent(1);
  int64_t plane = grad_output.numel() / (batch * channels);
  Tensor gb({channels}, grad_output.precision());
  const double* g = grad_output.data();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t c = 0; c < channels; ++c) {
      const double* p = g + (b * channels + c) * plane;
      double acc = 0.0;
      for (int64_t i = 0; i < plane; ++i) acc += p[i];
      gb[c] += acc;
    }
  return gb;
}

namespace {

void check_transposed_spec(const ConvSpec& spec, const char* op) {
  validate_conv_spec(spec);
  if (spec.padding != Padding::Valid)
    throw ConfigError(std::string(op) + ": only valid padding is supported");
  for (int64_t r : spec.dilations_or_ones())
    if (r != 1) throw ConfigError(std::string(op) + ": dilation is not supported");
}

struct TransposedGeometry {
  int64_t dims = 0, batch = 0;
  std::vector<int64_t> in_sp, out_sp, stride;
  std::vector<int64_t> in_stride, out_stride;
  int64_t in_plane = 0, out_plane = 0, kernel_taps = 0;
};

TransposedGeometry make_tgeometry(const ConvSpec& spec, const std::vector<int64_t>& in_sp,
                                  int64_t batch) {
  TransposedGeometry g;
  g.dims = spec.spatial_dims();
  g.batch = batch;
  g.in_sp = in_sp;
  g.stride = spec.strides_or_ones();
  g.out_sp.resize(in_sp.size());
  for (size_t d = 0; d < in_sp.size(); ++d)
    g.out_sp[d] = (in_sp[d] - 1) * g.stride[d] + spec.kernel_shape[d];
  g.in_stride = row_major_strides(g.in_sp);
  g.out_stride = row_major_strides(g.out_sp);
  g.in_plane = product(g.in_sp);
  g.out_plane = product(g.out_sp);
  g.kernel_taps = product(spec.kernel_shape);
  return g;
}

enum class TTapOp { Scatter, Gather, Dot };

// Walks the transposed-conv input index box for one kernel tap k:
// Scatter: out[p*stride + k] += w * in[p]      (forward)
// Gather:  in[p] += w * out[p*stride + k]      (grad wrt input)
// Dot:     acc += in[p] * out[p*stride + k]    (grad wrt weights)
inline double t_tap_rows(TTapOp op, double* out_plane, double* in_plane, double w,
                         const TransposedGeometry& g, const int64_t* k) {
  int64_t last = g.dims - 1;
  int64_t n = g.in_sp[last];
  int64_t bs = g.stride[last];
  double acc = 0.0;
  auto run_row = [&](int64_t in_base, int64_t out_base) {
    double* i = in_plane + in_base;
    double* o = out_plane + out_base + k[last];
    switch (op) {
      case TTapOp::Scatter: scatter_rows(o, bs, i, n, w); break;
      case TTapOp::Gather: axpy_rows(i, o, bs, n, w); break;
      case TTapOp::Dot: acc += dot_rows(i, o, bs, n); break;
    }
  };
  if (g.dims == 1) {
    run_row(0, 0);
  } else if (g.dims == 2) {
    for (int64_t y = 0; y < g.in_sp[0]; ++y)
      run_row(y * g.in_stride[0], (y * g.stride[0] + k[0]) * g.out_stride[0]);
  } else {
    for (int64_t z = 0; z < g.in_sp[0]; ++z)
      for (int64_t y = 0; y < g.in_sp[1]; ++y)
        run_row(z * g.in_stride[0] + y * g.in_stride[1],
                (z * g.stride[0] + k[0]) * g.out_stride[0] +
                    (y * g.stride[1] + k[1]) * g.out_stride[1]);
  }
  return acc;
}

struct KernelIter {
  const std::vector<int64_t>& kernel;
  int64_t k[3] = {0, 0, 0};
  int64_t dims;
  explicit KernelIter(const std::vector<int64_t>& kernel_shape)
      : kernel(kernel_shape), dims(static_cast<int64_t>(kernel_shape.size())) {}
  bool next() {
    int64_t d = dims - 1;
    while (d >= 0) {
      if (++k[d] < kernel[d]) return true;
      k[d--] = 0;
    }
    return false;
  }
};

}  // namespace

Tensor transposed_conv_nd(const Tensor& input, const Tensor& weights, const Tensor* bias,
                          const ConvSpec& spec) {
  check_transposed_spec(spec, "transposed_conv_nd");
  check_input_tensor(input, spec, "transposed_conv_nd");
  check_weights(weights, spec, true, "transposed_conv_nd");
  check_bias(bias, spec, "transposed_conv_nd");

  std::vector<int64_t> in_sp(input.shape().begin() + 2, input.shape().end());
  TransposedGeometry g = make_tgeometry(spec, in_sp, input.extent(0));
  std::vector<int64_t> out_shape = {g.batch, spec.out_channels};
  out_shape.insert(out_shape.end(), g.out_sp.begin(), g.out_sp.end());
  Tensor out(out_shape, input.precision());

  const double* in = input.data();
  const double* w = weights.data();
  const double* bs = bias ? bias->data() : nullptr;
  double* o = out.data();
  int64_t ic_count = spec.in_channels;
  int64_t oc_count = spec.out_channels;

  parallel_for(0, g.batch * oc_count, [&](int64_t plane) {
    int64_t b = plane / oc_count;
    int64_t oc = plane % oc_count;
    double* out_plane = o + plane * g.out_plane;
    std::fill(out_plane, out_plane + g.out_plane, bs ? bs[oc] : 0.0);
    for (int64_t ic = 0; ic < ic_count; ++ic) {
      double* in_plane = const_cast<double*>(in) + (b * ic_count + ic) * g.in_plane;
      const double* wp = w + (ic * oc_count + oc) * g.kernel_taps;
      KernelIter tap(spec.kernel_shape);
      int64_t t = 0;
      do {
        t_tap_rows(TTapOp::Scatter, out_plane, in_plane, wp[t++], g, tap.k);
      } while (tap.next());
    }
  });
  return out;
}

Tensor transposed_conv_grad_input(const Tensor& grad_output, const Tensor& weights,
                                  const ConvSpec& spec) {
  check_transposed_spec(spec, "transposed_conv_grad_input");
  check_weights(weights, spec, true, "transposed_conv_grad_input");
  if (grad_output.ndim() != spec.spatial_dims() + 2 || grad_output.extent(1) != spec.out_channels)
    throw DimensionError("transposed_conv_grad_input: gradient shaped " +
                         shape_string(grad_output.shape()) + " does not match spec");

  std::vector<int64_t> stride = spec.strides_or_ones();
  std::vector<int64_t> in_sp(static_cast<size_t>(spec.spatial_dims()));
  for (int64_t d = 0; d < spec.spatial_dims(); ++d) {
    int64_t out_e = grad_output.extent(d + 2);
    int64_t k = spec.kernel_shape[static_cast<size_t>(d)];
    int64_t s = stride[static_cast<size_t>(d)];
    if (out_e < k || (out_e - k) % s != 0)
      throw DimensionError("transposed_conv_grad_input: output extent " + std::to_string(out_e) +
                           " inconsistent with kernel/stride in dimension " + std::to_string(d));
    in_sp[static_cast<size_t>(d)] = (out_e - k) / s + 1;
  }
  TransposedGeometry g = make_tgeometry(spec, in_sp, grad_output.extent(0));

  std::vector<int64_t> in_shape = {g.batch, spec.in_channels};
  in_shape.insert(in_shape.end(), in_sp.begin(), in_sp.end());
  Tensor grad_in(in_shape, grad_output.precision());

  const double* go = grad_output.data();
  const double* w = weights.data();
  double* gi = grad_in.data();
  int64_t ic_count = spec.in_channels;
  int64_t oc_count = spec.out_channels;

  parallel_for(0, g.batch * ic_count, [&](int64_t plane) {
    int64_t b = plane / ic_count;
    int64_t ic = plane % ic_count;
    double* gi_plane = gi + plane * g.in_plane;
    for (int64_t oc = 0; oc < oc_count; ++oc) {
      double* go_plane = const_cast<double*>(go) + (b * oc_count + oc) * g.out_plane;
      const double* wp = w + (ic * oc_count + oc) * g.kernel_taps;
      KernelIter tap(spec.kernel_shape);
      int64_t t = 0;
      do {
        t_tap_rows(TTapOp::Gather, go_plane, gi_plane, wp[t++], g, tap.k);
      } while (tap.next());
    }
  });
  return grad_in;
}

Tensor transposed_conv_grad_weights(const Tensor& grad_output, const Tensor& input,
                                    const ConvSpec& spec) {
  check_transposed_spec(spec, "transposed_conv_grad_weights");
  check_input_tensor(input, spec, "transposed_conv_grad_weights");
  std::vector<int64_t> in_sp(input.shape().begin() + 2, input.shape().end());
  TransposedGeometry g = make_tgeometry(spec, in_sp, input.extent(0));
  if (grad_output.extent(0) != g.batch || grad_output.extent(1) != spec.out_channels)
    throw DimensionError("transposed_conv_grad_weights: gradient shaped " +
                         shape_string(grad_output.shape()) + " does not match spec");
  for (int64_t d = 0; d < g.dims; ++d)
    if (grad_output.extent(d + 2) != g.out_sp[static_cast<size_t>(d)])
      throw DimensionError("transposed_conv_grad_weights: gradient spatial extents mismatch");

  std::vector<int64_t> w_shape = {spec.in_channels, spec.out_channels};
  w_shape.insert(w_shape.end(), spec.kernel_shape.begin(), spec.kernel_shape.end());
  Tensor grad_w(w_shape, input.precision());

  const double* go = grad_output.data();
  const double* in = input.data();
  double* gw = grad_w.data();
  int64_t ic_count = spec.in_channels;
  int64_t oc_count = spec.out_channels;

  parallel_for(0, ic_count * oc_count, [&](int64_t pair) {
    int64_t ic = pair / oc_count;
    int64_t oc = pair % oc_count;
    double* gw_tap = gw + pair * g.kernel_taps;
    KernelIter tap(spec.kernel_shape);
    int64_t t = 0;
    do {
      double acc = 0.0;
      for (int64_t b = 0; b < g.batch; ++b) {
        double* go_plane = const_cast<double*>(go) + (b * oc_count + oc) * g.out_plane;
        double* in_plane = const_cast<double*>(in) + (b * ic_count + ic) * g.in_plane;
        acc += t_tap_rows(TTapOp::Dot, go_plane, in_plane, 0.0, g, tap.k);
      }
      gw_tap[t++] = acc;
    } while (tap.next());
  });
  return grad_w;
}

}  // namespace pat
