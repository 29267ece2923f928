#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pat/errors.hpp"

namespace pat {

// Storage width used when a tensor is written to disk. Values are always held
// as double in memory; the tag travels with the tensor so file round-trips
// keep their width and so verification code can insist on double precision.
enum class Precision : uint8_t { Single = 0, Double = 1 };

// Dense row-major tensor (last dimension fastest). Networks use the layout
// (batch, channels, spatial...); bare images and volumes are plain spatial
// tensors.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape, Precision prec = Precision::Double)
      : shape_(std::move(shape)), prec_(prec) {
    data_.assign(static_cast<size_t>(checked_numel(shape_)), 0.0);
  }

  static Tensor zeros(std::vector<int64_t> shape, Precision prec = Precision::Double) {
    return Tensor(std::move(shape), prec);
  }

  static Tensor full(std::vector<int64_t> shape, double value,
                     Precision prec = Precision::Double) {
    Tensor t(std::move(shape), prec);
    t.fill(value);
    return t;
  }

  static Tensor from_vector(std::vector<int64_t> shape, std::vector<double> values,
                            Precision prec = Precision::Double);

  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t extent(int64_t dim) const;
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  Precision precision() const { return prec_; }
  void set_precision(Precision p) { prec_ = p; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& flat() { return data_; }
  const std::vector<double>& flat() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  template <class... Ix>
  double& at(Ix... ix) {
    return data_[static_cast<size_t>(flat_index({static_cast<int64_t>(ix)...}))];
  }
  template <class... Ix>
  double at(Ix... ix) const {
    return data_[static_cast<size_t>(flat_index({static_cast<int64_t>(ix)...}))];
  }

  int64_t flat_index(const std::vector<int64_t>& idx) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  Tensor reshaped(std::vector<int64_t> new_shape) const;

  void fill(double v);
  double min_value() const;
  double max_value() const;
  double max_abs() const;
  double sum() const;
  bool all_finite() const;

 private:
  static int64_t checked_numel(const std::vector<int64_t>& shape);

  std::vector<int64_t> shape_;
  std::vector<double> data_;
  Precision prec_ = Precision::Double;
};

std::string shape_string(const std::vector<int64_t>& shape);

// Elementwise helpers; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// max(value, 0) elementwise.
Tensor relu(const Tensor& input);
// Routes grad_output through the positive entries of the forward input.
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

// Concatenation along the channel dimension of (batch, channels, spatial...)
// tensors; every other dimension must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor concat_channels(const std::vector<const Tensor*>& parts);

// Non-overlapping window maximum over the spatial dimensions of a
// (batch, channels, spatial...) tensor. Window extents must divide the
// spatial extents exactly. The argmax overload records, per output element,
// the flat input index of the winning entry (first occurrence on ties).
Tensor max_pool_nd(const Tensor& input, const std::vector<int64_t>& window);
Tensor max_pool_nd(const Tensor& input, const std::vector<int64_t>& window,
                   std::vector<int64_t>& argmax_out);

// Separable moving average with an odd window applied along every dimension,
// zero padded so the extents are preserved. width 1 is the identity.
Tensor box_filter(const Tensor& input, int64_t width);

}  // namespace pat
