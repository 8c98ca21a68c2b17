#pragma once

#include <cstddef>
#include <vector>

#include "magicvo/tensor.hpp"

// Differentiable primitives. Every function records a node with its own
// backward rule; shapes are checked up front and violations raise ShapeError
// naming the op and both shapes.
namespace magicvo::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& x, double s);

/// x: [rows, C], bias: [C]. The only broadcasting op.
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// a: [m, k], b: [k, n] -> [m, n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// 2-D transpose.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// input: [N, C, H, W], weight: [O, C, KH, KW], bias: [O] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              Conv2dOptions opts);
std::size_t conv_output_size(std::size_t in, std::size_t kernel,
                             std::size_t stride, std::size_t padding);

/// Concatenates along `axis`; all other extents must agree.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
inline Tensor concat_channels(const std::vector<Tensor>& parts) {
  return concat(parts, 1);
}
/// Rows [begin, end) of the leading (time) axis.
Tensor slice_time(const Tensor& x, std::size_t begin, std::size_t end);
/// Columns [begin, end) of a 2-D tensor.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor square(const Tensor& x);

/// Elementwise x * mask where mask is a constant (non-differentiated) tensor
/// holding 0 for dropped units and 1/(1-p) for kept ones.
Tensor dropout_mask_apply(const Tensor& x, const Tensor& mask);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace magicvo::ops
