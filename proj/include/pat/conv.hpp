#pragma once

#include <cstdint>
#include <vector>

#include "pat/tensor.hpp"

namespace pat {

enum class Padding { Valid, SameZero };

// Geometry of one convolution layer. kernel_shape gives the spatial kernel
// extents (rank 1 to 3). stride and dilation_rate may be empty (all ones),
// hold a single value broadcast to every dimension, or one value per
// dimension.
struct ConvSpec {
  std::vector<int64_t> kernel_shape;
  std::vector<int64_t> stride;
  std::vector<int64_t> dilation_rate;
  Padding padding = Padding::Valid;
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  bool bias = true;

  int64_t spatial_dims() const { return static_cast<int64_t>(kernel_shape.size()); }
  std::vector<int64_t> strides_or_ones() const;
  std::vector<int64_t> dilations_or_ones() const;
};

// Throws ConfigError for invalid field combinations.
void validate_conv_spec(const ConvSpec& spec);

// Output spatial extents and left padding for an input of the given spatial
// extents. Valid padding requires the dilated kernel to fit; same-zero keeps
// extent ceil(S / stride), padding symmetrically (extra zero on the trailing
// side when the total is odd).
std::vector<int64_t> conv_output_extents(const ConvSpec& spec,
                                         const std::vector<int64_t>& in_spatial);
std::vector<int64_t> conv_pad_left(const ConvSpec& spec, const std::vector<int64_t>& in_spatial);

// Strided, dilated cross-correlation over (batch, channels, spatial...)
// tensors. weights is (out_channels, in_channels, kernel...); bias, when the
// spec asks for one, is (out_channels).
Tensor conv_nd(const Tensor& input, const Tensor& weights, const Tensor* bias,
               const ConvSpec& spec);

// Adjoint partials of conv_nd for reverse-mode differentiation.
Tensor conv_grad_input(const Tensor& grad_output, const Tensor& weights, const ConvSpec& spec,
                       const std::vector<int64_t>& in_spatial);
Tensor conv_grad_weights(const Tensor& grad_output, const Tensor& input, const ConvSpec& spec);
Tensor conv_grad_bias(const Tensor& grad_output);

// Transposed (fractionally strided) convolution: the adjoint of a valid,
// unit-dilation convolution with the same weights. weights is
// (in_channels, out_channels, kernel...); output spatial extents are
// (in - 1) * stride + kernel. Requires valid padding and dilation 1.
Tensor transposed_conv_nd(const Tensor& input, const Tensor& weights, const Tensor* bias,
                          const ConvSpec& spec);

Tensor transposed_conv_grad_input(const Tensor& grad_output, const Tensor& weights,
                                  const ConvSpec& spec);
Tensor transposed_conv_grad_weights(const Tensor& grad_output, const Tensor& input,
                                    const ConvSpec& spec);

}  // namespace pat
