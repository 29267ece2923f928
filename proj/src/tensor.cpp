#include "pat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pat {

int64_t Tensor::checked_numel(const std::vector<int64_t>& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    if (n > std::numeric_limits<int64_t>::max() / e)
      throw DimensionError("tensor shape overflows element count: " + shape_string(shape));
    n *= e;
  }
  return n;
}

Tensor Tensor::from_vector(std::vector<int64_t> shape, std::vector<double> values,
                           Precision prec) {
  int64_t n = checked_numel(shape);
  if (n != static_cast<int64_t>(values.size()))
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_string(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  t.prec_ = prec;
  return t;
}

int64_t Tensor::extent(int64_t dim) const {
  if (dim < 0 || dim >= ndim())
    throw DimensionError("dimension " + std::to_string(dim) + " out of range for shape " +
                         shape_string(shape_));
  return shape_[static_cast<size_t>(dim)];
}

int64_t Tensor::flat_index(const std::vector<int64_t>& idx) const {
  if (static_cast<int64_t>(idx.size()) != ndim())
    throw DimensionError("index rank " + std::to_string(idx.size()) + " does not match shape " +
                         shape_string(shape_));
  int64_t flat = 0;
  for (size_t d = 0; d < idx.size(); ++d) {
    if (idx[d] < 0 || idx[d] >= shape_[d])
      throw DimensionError("index out of bounds in dimension " + std::to_string(d) +
                           " for shape " + shape_string(shape_));
    flat = flat * shape_[d] + idx[d];
  }
  return flat;
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
  if (checked_numel(new_shape) != numel())
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                         shape_string(new_shape));
  Tensor t;
  t.shape_ = std::move(new_shape);
  t.data_ = data_;
  t.prec_ = prec_;
  return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double Tensor::min_value() const { return *std::min_element(data_.begin(), data_.end()); }

double Tensor::max_value() const { return *std::max_element(data_.begin(), data_.end()); }

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string shape_string(const std::vector<int64_t>& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  require_same_shape(input, grad_output, "relu_backward");
  Tensor out = grad_output;
  for (int64_t i = 0; i < out.numel(); ++i)
    if (!(input[i] > 0.0)) out[i] = 0.0;
  return out;
}

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const Tensor& first = *parts.front();
  if (first.ndim() < 2)
    throw DimensionError("concat_channels: need (batch, channels, ...) tensors, got " +
                         shape_string(first.shape()));
  int64_t channels = 0;
  for (const Tensor* p : parts) {
    if (p->ndim() != first.ndim())
      throw DimensionError("concat_channels: rank mismatch " + shape_string(first.shape()) +
                           " vs " + shape_string(p->shape()));
    for (int64_t d = 0; d < first.ndim(); ++d)
      if (d != 1 && p->extent(d) != first.extent(d))
        throw DimensionError("concat_channels: extent mismatch in dimension " +
                             std::to_string(d) + ": " + shape_string(first.shape()) + " vs " +
                             shape_string(p->shape()));
    channels += p->extent(1);
  }

  std::vector<int64_t> out_shape = first.shape();
  out_shape[1] = channels;
  Tensor out(out_shape);

  int64_t batch = first.extent(0);
  int64_t plane = first.numel() / (batch * first.extent(1));
  double* dst = out.data();
  for (int64_t b = 0; b < batch; ++b) {
    for (const Tensor* p : parts) {
      const double* src = p->data() + b * p->extent(1) * plane;
      std::copy(src, src + p->extent(1) * plane, dst);
      dst += p->extent(1) * plane;
    }
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  return concat_channels(std::vector<const Tensor*>{&a, &b});
}

Tensor max_pool_nd(const Tensor& input, const std::vector<int64_t>& window,
                std::vector<int64_t>& argmax_out) {
  int64_t spatial = input.ndim() - 2;
  if (spatial < 1)
    throw DimensionError("max_pool: need (batch, channels, spatial...) input, got " +
                         shape_string(input.shape()));
  if (static_cast<int64_t>(window.size()) != spatial)
    throw DimensionError("max_pool: window rank " + std::to_string(window.size()) +
                         " does not match " + std::to_string(spatial) + " spatial dimensions");

  std::vector<int64_t> in_sp(input.shape().begin() + 2, input.shape().end());
  std::vector<int64_t> out_sp(spatial);
  for (int64_t d = 0; d < spatial; ++d) {
    if (window[d] < 1) throw DimensionError("max_pool: window extents must be positive");
    if (in_sp[d] % window[d] != 0)
      throw DimensionError("max_pool: spatial extent " + std::to_string(in_sp[d]) +
                           " in dimension " + std::to_string(d) + " is not divisible by window " +
                           std::to_string(window[d]));
    out_sp[d] = in_sp[d] / window[d];
  }

  std::vector<int64_t> out_shape = {input.extent(0), input.extent(1)};
  out_shape.insert(out_shape.end(), out_sp.begin(), out_sp.end());
  Tensor out(out_shape);
  argmax_out.assign(static_cast<size_t>(out.numel()), 0);

  // Strides over the spatial block of one (batch, channel) plane.
  std::vector<int64_t> in_stride(spatial, 1);
  for (int64_t d = spatial - 2; d >= 0; --d) in_stride[d] = in_stride[d + 1] * in_sp[d + 1];
  int64_t in_plane = in_stride[0] * in_sp[0];
  int64_t out_plane = 1;
  for (int64_t e : out_sp) out_plane *= e;
  int64_t planes = input.extent(0) * input.extent(1);

  std::vector<int64_t> oidx(spatial, 0), widx(spatial, 0);
  for (int64_t pl = 0; pl < planes; ++pl) {
    const double* src = input.data() + pl * in_plane;
    double* dst = out.data() + pl * out_plane;
    int64_t* arg = argmax_out.data() + pl * out_plane;
    std::fill(oidx.begin(), oidx.end(), 0);
    for (int64_t o = 0; o < out_plane; ++o) {
      int64_t base = 0;
      for (int64_t d = 0; d < spatial; ++d) base += oidx[d] * window[d] * in_stride[d];
      double best = -std::numeric_limits<double>::infinity();
      int64_t best_at = base;
      std::fill(widx.begin(), widx.end(), 0);
      for (;;) {
        int64_t off = base;
        for (int64_t d = 0; d < spatial; ++d) off += widx[d] * in_stride[d];
        if (src[off] > best) {
          best = src[off];
          best_at = off;
        }
        int64_t d = spatial - 1;
        while (d >= 0 && ++widx[d] == window[d]) widx[d--] = 0;
        if (d < 0) break;
      }
      dst[o] = best;
      arg[o] = pl * in_plane + best_at;
      int64_t d = spatial - 1;
      while (d >= 0 && ++oidx[d] == out_sp[d]) oidx[d--] = 0;
    }
  }
  return out;
}

Tensor max_pool_nd(const Tensor& input, const std::vector<int64_t>& window) {
  std::vector<int64_t> argmax;
  return max_pool_nd(input, window, argmax);
}

Tensor box_filter(const Tensor& input, int64_t width) {
  if (width < 1 || width % 2 == 0)
    throw ConfigError("box_filter: width must be odd and positive, got " + std::to_string(width));
  if (width == 1) return input;

  Tensor out = input;
  int64_t half = width / 2;
  const std::vector<int64_t>& shape = input.shape();

  std::vector<int64_t> stride(shape.size(), 1);
  for (int64_t d = static_cast<int64_t>(shape.size()) - 2; d >= 0; --d)
    stride[d] = stride[d + 1] * shape[d + 1];

  std::vector<double> line;
  for (size_t axis = 0; axis < shape.size(); ++axis) {
    int64_t n = shape[axis];
    int64_t st = stride[axis];
    int64_t lines = input.numel() / n;
    line.assign(static_cast<size_t>(n), 0.0);
    for (int64_t l = 0; l < lines; ++l) {
      // Base offset: decompose the line counter over every axis except the
      // filtered one.
      int64_t rest = l;
      int64_t base = 0;
      for (int64_t d = static_cast<int64_t>(shape.size()) - 1; d >= 0; --d) {
        if (d == static_cast<int64_t>(axis)) continue;
        int64_t idx = rest % shape[d];
        rest /= shape[d];
        base += idx * stride[d];
      }
      double* p = out.data() + base;
      for (int64_t i = 0; i < n; ++i) line[static_cast<size_t>(i)] = p[i * st];
      for (int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        int64_t lo = std::max<int64_t>(0, i - half);
        int64_t hi = std::min<int64_t>(n - 1, i + half);
        for (int64_t j = lo; j <= hi; ++j) s += line[static_cast<size_t>(j)];
        p[i * st] = s / static_cast<double>(width);
      }
    }
  }
  return out;
}

}  // namespace pat
