#pragma once

// Primitive tensor kernels. Every function is pure: inputs are taken by const
// reference and a fresh tensor is returned. Reductions run in a fixed order so
// results are bitwise reproducible for a given input.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <string>

#include "mamaf/tensor.hpp"

namespace mamaf {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

enum class Padding { same, valid };

struct Stride2 {
  Index h = 1, w = 1;
};
struct Stride3 {
  Index t = 1, h = 1, w = 1;
};

// ---------------------------------------------------------------------------
// Convolution geometry
// ---------------------------------------------------------------------------

/// Extent bookkeeping for one convolved axis.
struct ConvAxis {
  Index in = 1, kernel = 1, stride = 1, out = 1, pad_lead = 0;
};

/// Same padding: out = ceil(in/s); the total padding max((out-1)s + k - in, 0)
/// is split with the smaller half on the leading side.
inline ConvAxis conv_axis(Index in, Index kernel, Index stride, Padding padding, const char* name) {
  if (stride < 1) throw ShapeError(std::string("conv: stride along ") + name + " must be >= 1");
  ConvAxis a{in, kernel, stride, 0, 0};
  if (padding == Padding::same) {
    a.out = (in + stride - 1) / stride;
    const Index total = std::max<Index>((a.out - 1) * stride + kernel - in, 0);
    a.pad_lead = total / 2;
  } else {
    a.out = in >= kernel ? (in - kernel) / stride + 1 : 0;
  }
  if (a.out < 1) {
    throw ShapeError(std::string("conv: zero-extent output along ") + name + " (input " + std::to_string(in) +
                     ", kernel " + std::to_string(kernel) + ")");
  }
  return a;
}

/// Geometry of a [T,H,W,Cin] (*) [kt,kh,kw,Cin,Cout] cross-correlation.
struct ConvGeometry {
  ConvAxis t, h, w;
  Index cin = 1, cout = 1;

  Index patch() const { return t.kernel * h.kernel * w.kernel * cin; }
  Index positions() const { return t.out * h.out * w.out; }
  Shape out_shape() const { return Shape{t.out, h.out, w.out, cout}; }
};

inline ConvGeometry conv3d_geometry(const Shape& input, const Shape& kernel, Stride3 stride, Padding padding) {
  if (input.rank() != 4) throw ShapeError("conv3d: input must be [N,H,W,C], got " + input.str());
  if (kernel.rank() != 5) throw ShapeError("conv3d: kernel must be [kt,kh,kw,Cin,Cout], got " + kernel.str());
  if (input[3] != kernel[3]) {
    throw ShapeError("conv3d: input channels " + std::to_string(input[3]) + " != kernel Cin " +
                     std::to_string(kernel[3]) + " (input " + input.str() + ", kernel " + kernel.str() + ")");
  }
  ConvGeometry g;
  g.t = conv_axis(input[0], kernel[0], stride.t, padding, "time");
  g.h = conv_axis(input[1], kernel[1], stride.h, padding, "height");
  g.w = conv_axis(input[2], kernel[2], stride.w, padding, "width");
  g.cin = input[3];
  g.cout = kernel[4];
  return g;
}

namespace detail {

/// Rows of the im2col matrix processed per GEMM; bounds scratch memory.
inline Index conv_chunk_rows(const ConvGeometry& g) {
  return std::max<Index>(1, std::min<Index>(g.positions(), (Index{1} << 21) / g.patch()));
}

template <typename T>
void im2col(const T* in, const ConvGeometry& g, Index row0, Index rows, T* col) {
  const Index H = g.h.in, W = g.w.in, C = g.cin;
  const Index Ho = g.h.out, Wo = g.w.out;
  for (Index r = 0; r < rows; ++r) {
    const Index p = row0 + r;
    const Index ow = p % Wo;
    const Index oh = (p / Wo) % Ho;
    const Index ot = p / (Wo * Ho);
    T* dst = col + r * g.patch();
    for (Index dt = 0; dt < g.t.kernel; ++dt) {
      const Index it = ot * g.t.stride - g.t.pad_lead + dt;
      const bool t_ok = it >= 0 && it < g.t.in;
      for (Index dh = 0; dh < g.h.kernel; ++dh) {
        const Index ih = oh * g.h.stride - g.h.pad_lead + dh;
        const bool h_ok = t_ok && ih >= 0 && ih < H;
        for (Index dw = 0; dw < g.w.kernel; ++dw, dst += C) {
          const Index iw = ow * g.w.stride - g.w.pad_lead + dw;
          if (h_ok && iw >= 0 && iw < W) {
            std::copy_n(in + ((it * H + ih) * W + iw) * C, C, dst);
          } else {
            std::fill_n(dst, C, T(0));
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, Index row0, Index rows, T* in) {
  const Index H = g.h.in, W = g.w.in, C = g.cin;
  const Index Ho = g.h.out, Wo = g.w.out;
  for (Index r = 0; r < rows; ++r) {
    const Index p = row0 + r;
    const Index ow = p % Wo;
    const Index oh = (p / Wo) % Ho;
    const Index ot = p / (Wo * Ho);
    const T* src = col + r * g.patch();
    for (Index dt = 0; dt < g.t.kernel; ++dt) {
      const Index it = ot * g.t.stride - g.t.pad_lead + dt;
      const bool t_ok = it >= 0 && it < g.t.in;
      for (Index dh = 0; dh < g.h.kernel; ++dh) {
        const Index ih = oh * g.h.stride - g.h.pad_lead + dh;
        const bool h_ok = t_ok && ih >= 0 && ih < H;
        for (Index dw = 0; dw < g.w.kernel; ++dw, src += C) {
          const Index iw = ow * g.w.stride - g.w.pad_lead + dw;
          if (h_ok && iw >= 0 && iw < W) {
            T* dst = in + ((it * H + ih) * W + iw) * C;
            for (Index c = 0; c < C; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

inline Shape as_kernel3d(const Shape& k2) {
  if (k2.rank() != 4) throw ShapeError("conv2d: kernel must be [kh,kw,Cin,Cout], got " + k2.str());
  return Shape{1, k2[0], k2[1], k2[2], k2[3]};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv3d / conv2d forward and gradients
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, Stride3 stride,
                 Padding padding = Padding::same) {
  const ConvGeometry g = conv3d_geometry(input.shape(), kernel.shape(), stride, padding);
  if (bias.size() != g.cout) {
    throw ShapeError("conv: bias length " + std::to_string(bias.size()) + " != Cout " + std::to_string(g.cout));
  }
  Tensor<T> out(g.out_shape());
  const Index K = g.patch(), chunk = detail::conv_chunk_rows(g);
  RowMatrix<T> col(chunk, K);
  ConstMatrixMap<T> kmat(kernel.data(), K, g.cout);
  const auto b = bias.array().matrix().transpose();
  for (Index r0 = 0; r0 < g.positions(); r0 += chunk) {
    const Index rows = std::min(chunk, g.positions() - r0);
    detail::im2col(input.data(), g, r0, rows, col.data());
    MatrixMap<T> o(out.data() + r0 * g.cout, rows, g.cout);
    o.noalias() = col.topRows(rows) * kmat;
    o.rowwise() += b;
  }
  return out;
}

/// Gradient of conv3d w.r.t. its input.
template <typename T>
Tensor<T> conv3d_grad_input(const Tensor<T>& grad_out, const Shape& input_shape, const Tensor<T>& kernel,
                            Stride3 stride, Padding padding = Padding::same) {
  const ConvGeometry g = conv3d_geometry(input_shape, kernel.shape(), stride, padding);
  require_same_shape(grad_out.shape(), g.out_shape(), "conv3d_grad_input");
  Tensor<T> grad_in(input_shape);
  const Index K = g.patch(), chunk = detail::conv_chunk_rows(g);
  RowMatrix<T> col(chunk, K);
  ConstMatrixMap<T> kmat(kernel.data(), K, g.cout);
  for (Index r0 = 0; r0 < g.positions(); r0 += chunk) {
    const Index rows = std::min(chunk, g.positions() - r0);
    ConstMatrixMap<T> go(grad_out.data() + r0 * g.cout, rows, g.cout);
    col.topRows(rows).noalias() = go * kmat.transpose();
    detail::col2im_add(col.data(), g, r0, rows, grad_in.data());
  }
  return grad_in;
}

/// Gradient of conv3d w.r.t. kernel and bias, returned as {dkernel, dbias}.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> conv3d_grad_params(const Tensor<T>& grad_out, const Tensor<T>& input,
                                                   const Shape& kernel_shape, Stride3 stride,
                                                   Padding padding = Padding::same) {
  const ConvGeometry g = conv3d_geometry(input.shape(), kernel_shape, stride, padding);
  require_same_shape(grad_out.shape(), g.out_shape(), "conv3d_grad_params");
  Tensor<T> dk(kernel_shape);
  Tensor<T> db(Shape{g.cout});
  const Index K = g.patch(), chunk = detail::conv_chunk_rows(g);
  RowMatrix<T> col(chunk, K);
  MatrixMap<T> dkmat(dk.data(), K, g.cout);
  for (Index r0 = 0; r0 < g.positions(); r0 += chunk) {
    const Index rows = std::min(chunk, g.positions() - r0);
    detail::im2col(input.data(), g, r0, rows, col.data());
    ConstMatrixMap<T> go(grad_out.data() + r0 * g.cout, rows, g.cout);
    dkmat.noalias() += col.topRows(rows).transpose() * go;
  }
  ConstMatrixMap<T> go_all(grad_out.data(), g.positions(), g.cout);
  db.array() = go_all.colwise().sum().transpose().array();
  return {std::move(dk), std::move(db)};
}

/// Per-frame 2-D cross-correlation: [N,H,W,Cin] (*) [kh,kw,Cin,Cout] -> [N,H',W',Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, Stride2 stride,
                 Padding padding = Padding::same) {
  return conv3d(input, kernel.reshaped(detail::as_kernel3d(kernel.shape())), bias, Stride3{1, stride.h, stride.w},
                padding);
}

template <typename T>
Tensor<T> conv2d_grad_input(const Tensor<T>& grad_out, const Shape& input_shape, const Tensor<T>& kernel,
                            Stride2 stride, Padding padding = Padding::same) {
  return conv3d_grad_input(grad_out, input_shape, kernel.reshaped(detail::as_kernel3d(kernel.shape())),
                           Stride3{1, stride.h, stride.w}, padding);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> conv2d_grad_params(const Tensor<T>& grad_out, const Tensor<T>& input,
                                                   const Shape& kernel_shape, Stride2 stride,
                                                   Padding padding = Padding::same) {
  auto [dk, db] = conv3d_grad_params(grad_out, input, detail::as_kernel3d(kernel_shape),
                                     Stride3{1, stride.h, stride.w}, padding);
  return {dk.reshaped(kernel_shape), std::move(db)};
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

/// Batched product over matching leading axes. Either operand may be used
/// transposed in its last two axes.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a = false, bool transpose_b = false) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.rank() < 2 || sa.rank() != sb.rank()) {
    throw ShapeError("matmul: operands need equal rank >= 2, got " + sa.str() + " and " + sb.str());
  }
  const Index r = sa.rank();
  for (Index i = 0; i + 2 < r; ++i) {
    if (sa[i] != sb[i]) throw ShapeError("matmul: batch dims differ, " + sa.str() + " vs " + sb.str());
  }
  const Index ar = sa[r - 2], ac = sa[r - 1], br = sb[r - 2], bc = sb[r - 1];
  const Index m = transpose_a ? ac : ar, k = transpose_a ? ar : ac;
  const Index kb = transpose_b ? bc : br, n = transpose_b ? br : bc;
  if (k != kb) throw ShapeError("matmul: inner dims differ, " + sa.str() + " x " + sb.str());

  std::vector<Index> dims(sa.dims().begin(), sa.dims().end() - 2);
  dims.push_back(m);
  dims.push_back(n);
  Tensor<T> out{Shape(std::move(dims))};
  const Index batch = a.size() / (ar * ac);
  for (Index i = 0; i < batch; ++i) {
    ConstMatrixMap<T> A(a.data() + i * ar * ac, ar, ac);
    ConstMatrixMap<T> B(b.data() + i * br * bc, br, bc);
    MatrixMap<T> C(out.data() + i * m * n, m, n);
    if (!transpose_a && !transpose_b) C.noalias() = A * B;
    else if (transpose_a && !transpose_b) C.noalias() = A.transpose() * B;
    else if (!transpose_a && transpose_b) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
  return out;
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.rank() < 2) throw ShapeError("transpose_last2: rank must be >= 2, got " + s.str());
  const Index r = s.rank(), m = s[r - 2], n = s[r - 1];
  std::vector<Index> dims = s.dims();
  std::swap(dims[r - 2], dims[r - 1]);
  Tensor<T> out{Shape(std::move(dims))};
  const Index batch = x.size() / (m * n);
  for (Index i = 0; i < batch; ++i) {
    MatrixMap<T>(out.data() + i * m * n, n, m) = ConstMatrixMap<T>(x.data() + i * m * n, m, n).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

namespace detail {
struct AxisSplit {
  Index outer, n, inner;
};
inline AxisSplit split_axis(const Shape& s, Index axis) {
  AxisSplit a{1, s[axis], 1};
  for (Index i = 0; i < axis; ++i) a.outer *= s[i];
  for (Index i = axis + 1; i < s.rank(); ++i) a.inner *= s[i];
  return a;
}
}  // namespace detail

/// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, Index axis = -1) {
  const auto [outer, n, inner] = detail::split_axis(x.shape(), x.shape().axis(axis));
  Tensor<T> y(x.shape());
  for (Index o = 0; o < outer; ++o) {
    for (Index i = 0; i < inner; ++i) {
      const Index base = o * n * inner + i;
      T mx = x[base];
      for (Index j = 1; j < n; ++j) mx = std::max(mx, x[base + j * inner]);
      T sum = 0;
      for (Index j = 0; j < n; ++j) {
        const T e = std::exp(x[base + j * inner] - mx);
        y[base + j * inner] = e;
        sum += e;
      }
      for (Index j = 0; j < n; ++j) y[base + j * inner] /= sum;
    }
  }
  return y;
}

/// Given y = softmax(x) and dL/dy, returns dL/dx.
template <typename T>
Tensor<T> softmax_grad(const Tensor<T>& y, const Tensor<T>& grad_y, Index axis = -1) {
  require_same_shape(y.shape(), grad_y.shape(), "softmax_grad");
  const auto [outer, n, inner] = detail::split_axis(y.shape(), y.shape().axis(axis));
  Tensor<T> gx(y.shape());
  for (Index o = 0; o < outer; ++o) {
    for (Index i = 0; i < inner; ++i) {
      const Index base = o * n * inner + i;
      T dot = 0;
      for (Index j = 0; j < n; ++j) dot += y[base + j * inner] * grad_y[base + j * inner];
      for (Index j = 0; j < n; ++j) {
        const Index k = base + j * inner;
        gx[k] = y[k] * (grad_y[k] - dot);
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return Tensor<T>(x.shape(), x.array().max(T(0)));
}

/// Subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_grad(const Tensor<T>& x, const Tensor<T>& grad_y) {
  require_same_shape(x.shape(), grad_y.shape(), "relu_grad");
  return Tensor<T>(x.shape(), (x.array() > T(0)).select(grad_y.array(), T(0)));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  return Tensor<T>(a.shape(), a.array() + b.array());
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  return Tensor<T>(a.shape(), a.array() - b.array());
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  return Tensor<T>(a.shape(), a.array() * b.array());
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return Tensor<T>(a.shape(), a.array() * s);
}

/// x[..., n] + b[n]; the only broadcast the library supports.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const Index n = x.shape().back();
  if (bias.rank() != 1 || bias.size() != n) {
    throw ShapeError("add_bias: bias " + bias.shape().str() + " does not match last axis of " + x.shape().str());
  }
  Tensor<T> out = x;
  MatrixMap<T>(out.data(), x.size() / n, n).rowwise() += bias.array().matrix().transpose();
  return out;
}

/// Sum over all axes but the last: the gradient of add_bias w.r.t. bias.
template <typename T>
Tensor<T> sum_to_last_axis(const Tensor<T>& x) {
  const Index n = x.shape().back();
  Tensor<T> out(Shape{n});
  out.array() = ConstMatrixMap<T>(x.data(), x.size() / n, n).colwise().sum().transpose().array();
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  return Tensor<T>::scalar(x.array().sum());
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  return x.reshaped(std::move(shape));
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  return x.reshaped(Shape{x.size()});
}

/// out[i] = in[i+1] along axis 0, with the first frame wrapped to the end.
template <typename T>
Tensor<T> roll_forward(const Tensor<T>& x) {
  const Index n = x.dim(0), stride = x.size() / n;
  Tensor<T> out(x.shape());
  out.array().head((n - 1) * stride) = x.array().tail((n - 1) * stride);
  out.array().tail(stride) = x.array().head(stride);
  return out;
}

/// Inverse of roll_forward: out[i] = in[i-1], last frame wrapped to the front.
template <typename T>
Tensor<T> roll_backward(const Tensor<T>& x) {
  const Index n = x.dim(0), stride = x.size() / n;
  Tensor<T> out(x.shape());
  out.array().tail((n - 1) * stride) = x.array().head((n - 1) * stride);
  out.array().head(stride) = x.array().tail(stride);
  return out;
}

/// Stacks equally shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ShapeError("stack: no inputs");
  std::vector<Index> dims{static_cast<Index>(xs.size())};
  dims.insert(dims.end(), xs[0].shape().dims().begin(), xs[0].shape().dims().end());
  Tensor<T> out{Shape(std::move(dims))};
  const Index n = xs[0].size();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require_same_shape(xs[i].shape(), xs[0].shape(), "stack");
    out.array().segment(static_cast<Index>(i) * n, n) = xs[i].array();
  }
  return out;
}

/// Scaled dot-product self-attention with Q = K = V = x over the second-to-last
/// axis (tokens); batched over all leading axes. d_k is the last extent.
template <typename T>
Tensor<T> attention(const Tensor<T>& x) {
  if (x.rank() < 2) throw ShapeError("attention: input must be [..., tokens, d], got " + x.shape().str());
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(x.shape().back()));
  const Tensor<T> weights = softmax(scale(matmul(x, x, false, true), inv_sqrt_d), -1);
  return matmul(weights, x);
}

}  // namespace mamaf
