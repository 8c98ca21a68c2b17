#include "magicvo/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace magicvo::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

[[noreturn]] void shape_fail(const char* op, const std::string& what,
                             const Shape& expected, const Shape& actual) {
  throw ShapeError(std::string(op) + ": " + what + " expected " +
                   shape_str(expected) + ", got " + shape_str(actual));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(op, "operand shapes must match;", a.shape(), b.shape());
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_str(t.shape()));
  }
}

// Gradient buffer of input i, or nullptr when that input is not differentiated.
double* input_grad(detail::Node& n, std::size_t i) {
  auto& in = *n.inputs[i];
  if (!in.requires_grad) return nullptr;
  if (in.grad.empty()) in.grad.assign(in.data.size(), 0.0);
  return in.grad.data();
}

const double* input_data(detail::Node& n, std::size_t i) {
  return n.inputs[i]->data.data();
}

template <typename F>
Tensor unary(const char* op, const Tensor& x, F&& f,
             std::function<void(detail::Node&)> back) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor::make_result(x.shape(), std::move(out), op, {x}, std::move(back));
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return Tensor::make_result(a.shape(), std::move(out), "add", {a, b},
                             [](detail::Node& n) {
                               const std::size_t len = n.grad.size();
                               for (std::size_t k = 0; k < 2; ++k) {
                                 if (double* g = input_grad(n, k)) {
                                   for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[i];
                                 }
                               }
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return Tensor::make_result(a.shape(), std::move(out), "sub", {a, b},
                             [](detail::Node& n) {
                               const std::size_t len = n.grad.size();
                               if (double* g = input_grad(n, 0)) {
                                 for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[i];
                               }
                               if (double* g = input_grad(n, 1)) {
                                 for (std::size_t i = 0; i < len; ++i) g[i] -= n.grad[i];
                               }
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return Tensor::make_result(a.shape(), std::move(out), "mul", {a, b},
                             [](detail::Node& n) {
                               const std::size_t len = n.grad.size();
                               const double* av = input_data(n, 0);
                               const double* bv = input_data(n, 1);
                               if (double* g = input_grad(n, 0)) {
                                 for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[i] * bv[i];
                               }
                               if (double* g = input_grad(n, 1)) {
                                 for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[i] * av[i];
                               }
                             });
}

Tensor scalar_mul(const Tensor& x, double s) {
  return unary("scalar_mul", x, [s](double v) { return s * v; },
               [s](detail::Node& n) {
                 if (double* g = input_grad(n, 0)) {
                   for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += s * n.grad[i];
                 }
               });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", x, 2);
  require_rank("add_bias", bias, 1);
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  if (bias.dim(0) != cols) shape_fail("add_bias", "bias", {cols}, bias.shape());
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  const auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] + bv[c];
  }
  return Tensor::make_result(x.shape(), std::move(out), "add_bias", {x, bias},
                             [rows, cols](detail::Node& n) {
                               if (double* g = input_grad(n, 0)) {
                                 for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
                               }
                               if (double* g = input_grad(n, 1)) {
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < cols; ++c) g[c] += n.grad[r * cols + c];
                                 }
                               }
                             });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, lhs " + shape_str(a.shape()) +
                     " vs rhs " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MatMap(out.data(), m, n).noalias() =
      ConstMatMap(a.data().data(), m, k) * ConstMatMap(b.data().data(), k, n);
  return Tensor::make_result({m, n}, std::move(out), "matmul", {a, b},
                             [m, k, n](detail::Node& node) {
                               ConstMatMap dc(node.grad.data(), m, n);
                               if (double* g = input_grad(node, 0)) {
                                 MatMap(g, m, k).noalias() +=
                                     dc * ConstMatMap(input_data(node, 1), k, n).transpose();
                               }
                               if (double* g = input_grad(node, 1)) {
                                 MatMap(g, k, n).noalias() +=
                                     ConstMatMap(input_data(node, 0), m, k).transpose() * dc;
                               }
                             });
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(x.numel());
  MatMap(out.data(), c, r) = ConstMatMap(x.data().data(), r, c).transpose();
  return Tensor::make_result({c, r}, std::move(out), "transpose", {x},
                             [r, c](detail::Node& n) {
                               if (double* g = input_grad(n, 0)) {
                                 MatMap(g, r, c) += ConstMatMap(n.grad.data(), c, r).transpose();
                               }
                             });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    shape_fail("reshape", "element count mismatch; source", x.shape(), shape);
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), "reshape", {x},
                             [](detail::Node& n) {
                               if (double* g = input_grad(n, 0)) {
                                 for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
                               }
                             });
}

std::size_t conv_output_size(std::size_t in, std::size_t kernel,
                             std::size_t stride, std::size_t padding) {
  const std::size_t padded = in + 2 * padding;
  if (stride == 0 || padded < kernel) return 0;
  return (padded - kernel) / stride + 1;
}

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, o, kh, kw, stride, pad, oh, ow;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

// cols: [C*KH*KW, OH*OW] for one sample.
void im2col(const ConvGeometry& g, const double* img, double* cols) {
  std::size_t row = 0;
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        double* dst = cols + row * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            dst[oy * g.ow + ox] =
                inside ? img[(ch * g.h + static_cast<std::size_t>(iy)) * g.w +
                             static_cast<std::size_t>(ix)]
                       : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* img) {
  std::size_t row = 0;
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        const double* src = cols + row * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            img[(ch * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] +=
                src[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              Conv2dOptions opts) {
  require_rank("conv2d", input, 4);
  require_rank("conv2d", weight, 4);
  if (opts.stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                 weight.dim(0), weight.dim(2), weight.dim(3), opts.stride, opts.padding, 0, 0};
  if (weight.dim(1) != g.c) {
    throw ShapeError("conv2d: input has " + std::to_string(g.c) +
                     " channels but kernel " + shape_str(weight.shape()) + " expects " +
                     std::to_string(weight.dim(1)));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{g.o}) shape_fail("conv2d", "bias", {g.o}, bias.shape());
  g.oh = conv_output_size(g.h, g.kh, g.stride, g.pad);
  g.ow = conv_output_size(g.w, g.kw, g.stride, g.pad);
  if (g.oh == 0 || g.ow == 0) {
    throw ShapeError("conv2d: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                     " with padding " + std::to_string(g.pad) + " does not fit input " +
                     shape_str(input.shape()));
  }

  std::vector<double> out(g.n * g.o * g.pixels());
  std::vector<double> cols(g.patch() * g.pixels());
  ConstMatMap wmat(weight.data().data(), g.o, g.patch());
  const std::size_t in_stride = g.c * g.h * g.w;
  for (std::size_t s = 0; s < g.n; ++s) {
    im2col(g, input.data().data() + s * in_stride, cols.data());
    MatMap dst(out.data() + s * g.o * g.pixels(), g.o, g.pixels());
    dst.noalias() = wmat * ConstMatMap(cols.data(), g.patch(), g.pixels());
    if (has_bias) {
      for (std::size_t oc = 0; oc < g.o; ++oc) dst.row(oc).array() += bias.at(oc);
    }
  }

  std::vector<Tensor> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return Tensor::make_result(
      {g.n, g.o, g.oh, g.ow}, std::move(out), "conv2d", std::move(inputs),
      [g, has_bias](detail::Node& node) {
        double* gin = input_grad(node, 0);
        double* gw = input_grad(node, 1);
        double* gb = has_bias ? input_grad(node, 2) : nullptr;
        const double* in = input_data(node, 0);
        ConstMatMap wmat(input_data(node, 1), g.o, g.patch());
        std::vector<double> cols(g.patch() * g.pixels());
        std::vector<double> dcols(gin ? cols.size() : 0);
        const std::size_t in_stride = g.c * g.h * g.w;
        for (std::size_t s = 0; s < g.n; ++s) {
          ConstMatMap dout(node.grad.data() + s * g.o * g.pixels(), g.o, g.pixels());
          if (gw) {
            im2col(g, in + s * in_stride, cols.data());
            MatMap(gw, g.o, g.patch()).noalias() +=
                dout * ConstMatMap(cols.data(), g.patch(), g.pixels()).transpose();
          }
          if (gb) {
            for (std::size_t oc = 0; oc < g.o; ++oc) gb[oc] += dout.row(oc).sum();
          }
          if (gin) {
            MatMap(dcols.data(), g.patch(), g.pixels()).noalias() = wmat.transpose() * dout;
            col2im_add(g, dcols.data(), gin + s * in_stride);
          }
        }
      });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) shape_fail("concat", "all extents except the concat axis must match;", first, s);
    out_shape[axis] += s[axis];
  }
  // outer: product of dims before axis; inner: product after axis.
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_row = out_shape[axis] * inner;

  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.dim(axis) * inner;
    const auto src = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
    }
    offset += chunk;
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), "concat", parts,
                             [outer, out_row, offsets](detail::Node& n) {
                               for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                                 double* g = input_grad(n, k);
                                 if (!g) continue;
                                 const std::size_t chunk = n.inputs[k]->data.size() / outer;
                                 for (std::size_t o = 0; o < outer; ++o) {
                                   const double* src = n.grad.data() + o * out_row + offsets[k];
                                   for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += src[i];
                                 }
                               }
                             });
}

Tensor slice_time(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() < 1 || begin >= end || end > x.dim(0)) {
    throw ShapeError("slice_time: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for shape " + shape_str(x.shape()));
  }
  const std::size_t row = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                          x.data().begin() + static_cast<std::ptrdiff_t>(end * row));
  return Tensor::make_result(std::move(shape), std::move(out), "slice_time", {x},
                             [begin, row](detail::Node& n) {
                               if (double* g = input_grad(n, 0)) {
                                 g += begin * row;
                                 for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
                               }
                             });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin >= end || end > cols) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for shape " + shape_str(x.shape()));
  }
  const std::size_t width = end - begin;
  std::vector<double> out(rows * width);
  const auto src = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] = src[r * cols + begin + c];
  }
  return Tensor::make_result({rows, width}, std::move(out), "slice_cols", {x},
                             [rows, cols, begin, width](detail::Node& n) {
                               if (double* g = input_grad(n, 0)) {
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < width; ++c) {
                                     g[r * cols + begin + c] += n.grad[r * width + c];
                                   }
                                 }
                               }
                             });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, stable_sigmoid, [](detail::Node& n) {
    if (double* g = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        const double s = n.data[i];
        g[i] += n.grad[i] * s * (1.0 - s);
      }
    }
  });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](detail::Node& n) {
    if (double* g = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        const double t = n.data[i];
        g[i] += n.grad[i] * (1.0 - t * t);
      }
    }
  });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary("leaky_relu", x, [slope](double v) { return v > 0 ? v : slope * v; },
               [slope](detail::Node& n) {
                 const double* in = input_data(n, 0);
                 if (double* g = input_grad(n, 0)) {
                   for (std::size_t i = 0; i < n.grad.size(); ++i) {
                     g[i] += n.grad[i] * (in[i] > 0 ? 1.0 : slope);
                   }
                 }
               });
}

Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; }, [](detail::Node& n) {
    const double* in = input_data(n, 0);
    if (double* g = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += 2.0 * in[i] * n.grad[i];
    }
  });
}

Tensor dropout_mask_apply(const Tensor& x, const Tensor& mask) {
  require_same_shape("dropout_mask_apply", x, mask);
  if (mask.requires_grad()) {
    throw ContractError("dropout_mask_apply: mask must be a constant tensor");
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) * mask.at(i);
  return Tensor::make_result(x.shape(), std::move(out), "dropout_mask_apply", {x, mask},
                             [](detail::Node& n) {
                               const double* m = input_data(n, 1);
                               if (double* g = input_grad(n, 0)) {
                                 for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * m[i];
                               }
                             });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return Tensor::make_result({1}, {total}, "sum", {x}, [](detail::Node& n) {
    if (double* g = input_grad(n, 0)) {
      const std::size_t len = n.inputs[0]->data.size();
      for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double count = static_cast<double>(x.numel());
  return Tensor::make_result({1}, {total / count}, "mean", {x}, [count](detail::Node& n) {
    if (double* g = input_grad(n, 0)) {
      const std::size_t len = n.inputs[0]->data.size();
      for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[0] / count;
    }
  });
}

}  // namespace magicvo::ops
