#pragma once

// Value-level kernels and their vector-Jacobian products. The expression
// graph dispatches to these; they are also usable on their own.

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "qadb/tensor.hpp"

namespace qadb::ops {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace detail

template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                  "matmul shape mismatch " + shape_str(a.dims()) + " x " + shape_str(b.dims()));
  BasicTensor<Scalar> out({a.dim(0), b.dim(1)});
  out.matrix(a.dim(0), b.dim(1)).noalias() = a.matrix(a.dim(0), a.dim(1)) * b.matrix(b.dim(0), b.dim(1));
  return out;
}

template <typename Scalar>
std::pair<BasicTensor<Scalar>, BasicTensor<Scalar>> matmul_backward(const BasicTensor<Scalar>& a,
                                                                    const BasicTensor<Scalar>& b,
                                                                    const BasicTensor<Scalar>& grad) {
  const auto A = a.matrix(a.dim(0), a.dim(1));
  const auto B = b.matrix(b.dim(0), b.dim(1));
  const auto G = grad.matrix(a.dim(0), b.dim(1));
  BasicTensor<Scalar> da(a.dims()), db(b.dims());
  da.matrix(a.dim(0), a.dim(1)).noalias() = G * B.transpose();
  db.matrix(b.dim(0), b.dim(1)).noalias() = A.transpose() * G;
  return {std::move(da), std::move(db)};
}

// Elementwise sum. `b` may also be a rank-1 tensor matching the trailing
// extent of `a`, in which case it is broadcast over the leading rows.
template <typename Scalar>
BasicTensor<Scalar> add(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.same_shape(b)) return BasicTensor<Scalar>(a.dims(), a.data() + b.data());
  detail::require(a.rank() >= 1 && b.rank() == 1 && a.dims().back() == b.dim(0),
                  "add shape mismatch " + shape_str(a.dims()) + " + " + shape_str(b.dims()));
  BasicTensor<Scalar> out = a;
  const Index cols = b.dim(0);
  out.matrix(a.size() / cols, cols).rowwise() += b.data().transpose();
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> add_backward_rhs(const BasicTensor<Scalar>& b, const BasicTensor<Scalar>& grad) {
  if (grad.same_shape(b)) return grad;
  const Index cols = b.dim(0);
  BasicTensor<Scalar> db(b.dims());
  db.data() = grad.matrix(grad.size() / cols, cols).colwise().sum().transpose();
  return db;
}

// Elementwise product; either side may be a single-element tensor.
template <typename Scalar>
BasicTensor<Scalar> mul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.same_shape(b)) return BasicTensor<Scalar>(a.dims(), a.data().cwiseProduct(b.data()));
  if (b.size() == 1) return BasicTensor<Scalar>(a.dims(), a.data() * b[0]);
  if (a.size() == 1) return BasicTensor<Scalar>(b.dims(), b.data() * a[0]);
  throw ShapeError("mul shape mismatch " + shape_str(a.dims()) + " * " + shape_str(b.dims()));
}

// Gradient for the `self` operand of mul(self, other) given upstream `grad`
// shaped like the product.
template <typename Scalar>
BasicTensor<Scalar> mul_backward(const BasicTensor<Scalar>& self, const BasicTensor<Scalar>& other,
                                 const BasicTensor<Scalar>& grad) {
  if (self.same_shape(other)) return BasicTensor<Scalar>(self.dims(), grad.data().cwiseProduct(other.data()));
  if (other.size() == 1) return BasicTensor<Scalar>(self.dims(), grad.data() * other[0]);
  // self is the broadcast scalar
  return BasicTensor<Scalar>(self.dims(), BasicTensor<Scalar>::Vector::Constant(1, grad.data().dot(other.data())));
}

template <typename Scalar>
BasicTensor<Scalar> relu(const BasicTensor<Scalar>& x) {
  return BasicTensor<Scalar>(x.dims(), x.data().cwiseMax(Scalar(0)));
}

// Subgradient at 0 is 0.
template <typename Scalar>
BasicTensor<Scalar> relu_backward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& grad) {
  return BasicTensor<Scalar>(x.dims(), (x.data().array() > Scalar(0)).select(grad.data(), Scalar(0)));
}

// Valid (unpadded) stride-1 cross-correlation.
// input [B,C,H,W], kernels [F,C,k,k], bias [F] -> [B,F,H-k+1,W-k+1]
template <typename Scalar>
BasicTensor<Scalar> conv2d(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernels,
                           const BasicTensor<Scalar>& bias);

template <typename Scalar>
struct Conv2dGrads {
  BasicTensor<Scalar> input, kernels, bias;
};

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_backward(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernels,
                                    const BasicTensor<Scalar>& grad, bool input_grad = true);

namespace detail {

struct ConvGeometry {
  Index batch, channels, height, width, filters, k, out_h, out_w;
};

template <typename Scalar>
ConvGeometry conv_geometry(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernels) {
  require(input.rank() == 4, "conv2d input must be [B,C,H,W], got " + shape_str(input.dims()));
  require(kernels.rank() == 4 && kernels.dim(2) == kernels.dim(3),
          "conv2d kernels must be [F,C,k,k], got " + shape_str(kernels.dims()));
  require(kernels.dim(1) == input.dim(1), "conv2d channel mismatch " + shape_str(input.dims()) + " vs " +
                                              shape_str(kernels.dims()));
  const Index k = kernels.dim(2);
  require(k <= input.dim(2) && k <= input.dim(3),
          "conv2d kernel " + std::to_string(k) + " larger than input " + shape_str(input.dims()));
  return {input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernels.dim(0), k,
          input.dim(2) - k + 1, input.dim(3) - k + 1};
}

// Patch matrix for one sample: rows indexed by (c, i, j), columns by output pixel.
template <typename Scalar>
void im2col(const Scalar* image, const ConvGeometry& g, RowMajorMatrix<Scalar>& cols) {
  cols.resize(g.channels * g.k * g.k, g.out_h * g.out_w);
  for (Index c = 0; c < g.channels; ++c) {
    for (Index i = 0; i < g.k; ++i) {
      for (Index j = 0; j < g.k; ++j) {
        const Index row = (c * g.k + i) * g.k + j;
        for (Index y = 0; y < g.out_h; ++y) {
          const Scalar* src = image + (c * g.height + y + i) * g.width + j;
          for (Index x = 0; x < g.out_w; ++x) cols(row, y * g.out_w + x) = src[x];
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const RowMajorMatrix<Scalar>& cols, const ConvGeometry& g, Scalar* image) {
  for (Index c = 0; c < g.channels; ++c) {
    for (Index i = 0; i < g.k; ++i) {
      for (Index j = 0; j < g.k; ++j) {
        const Index row = (c * g.k + i) * g.k + j;
        for (Index y = 0; y < g.out_h; ++y) {
          Scalar* dst = image + (c * g.height + y + i) * g.width + j;
          for (Index x = 0; x < g.out_w; ++x) dst[x] += cols(row, y * g.out_w + x);
        }
      }
    }
  }
}

}  // namespace detail

template <typename Scalar>
BasicTensor<Scalar> conv2d(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernels,
                           const BasicTensor<Scalar>& bias) {
  const auto g = detail::conv_geometry(input, kernels);
  detail::require(bias.rank() == 1 && bias.dim(0) == g.filters,
                  "conv2d bias must be [" + std::to_string(g.filters) + "], got " + shape_str(bias.dims()));
  BasicTensor<Scalar> out({g.batch, g.filters, g.out_h, g.out_w});
  const auto K = kernels.matrix(g.filters, g.channels * g.k * g.k);
  const Index in_stride = g.channels * g.height * g.width;
  const Index out_stride = g.filters * g.out_h * g.out_w;
  RowMajorMatrix<Scalar> cols;
  for (Index b = 0; b < g.batch; ++b) {
    detail::im2col(input.data().data() + b * in_stride, g, cols);
    Eigen::Map<RowMajorMatrix<Scalar>> dst(out.data().data() + b * out_stride, g.filters, g.out_h * g.out_w);
    dst.noalias() = K * cols;
    dst.colwise() += bias.data();
  }
  return out;
}

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_backward(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernels,
                                    const BasicTensor<Scalar>& grad, bool input_grad) {
  const auto g = detail::conv_geometry(input, kernels);
  Conv2dGrads<Scalar> out{BasicTensor<Scalar>(input.dims()), BasicTensor<Scalar>(kernels.dims()),
                          BasicTensor<Scalar>({g.filters})};
  const Index patch = g.channels * g.k * g.k;
  const auto K = kernels.matrix(g.filters, patch);
  auto dK = out.kernels.matrix(g.filters, patch);
  const Index in_stride = g.channels * g.height * g.width;
  const Index out_stride = g.filters * g.out_h * g.out_w;
  RowMajorMatrix<Scalar> cols, dcols;
  for (Index b = 0; b < g.batch; ++b) {
    detail::im2col(input.data().data() + b * in_stride, g, cols);
    Eigen::Map<const RowMajorMatrix<Scalar>> G(grad.data().data() + b * out_stride, g.filters,
                                               g.out_h * g.out_w);
    dK.noalias() += G * cols.transpose();
    out.bias.data() += G.rowwise().sum();
    if (!input_grad) continue;
    dcols.noalias() = K.transpose() * G;
    detail::col2im_add(dcols, g, out.input.data().data() + b * in_stride);
  }
  return out;
}

// 2x2 non-overlapping max pooling; odd trailing row/column dropped.
// `argmax` receives the flat input index chosen for each output element,
// ties going to the first maximum in row-major order.
template <typename Scalar>
BasicTensor<Scalar> maxpool2(const BasicTensor<Scalar>& input, std::vector<Index>* argmax = nullptr) {
  detail::require(input.rank() == 4, "maxpool2 input must be [B,C,H,W], got " + shape_str(input.dims()));
  const Index H = input.dim(2), W = input.dim(3);
  detail::require(H >= 2 && W >= 2, "maxpool2 needs spatial extent >= 2, got " + shape_str(input.dims()));
  const Index planes = input.dim(0) * input.dim(1), oh = H / 2, ow = W / 2;
  BasicTensor<Scalar> out({input.dim(0), input.dim(1), oh, ow});
  if (argmax) argmax->assign(static_cast<std::size_t>(out.size()), 0);
  const Scalar* src = input.data().data();
  Index o = 0;
  for (Index p = 0; p < planes; ++p) {
    for (Index y = 0; y < oh; ++y) {
      for (Index x = 0; x < ow; ++x, ++o) {
        Index best = (p * H + 2 * y) * W + 2 * x;
        for (Index dy = 0; dy < 2; ++dy) {
          for (Index dx = 0; dx < 2; ++dx) {
            const Index idx = (p * H + 2 * y + dy) * W + 2 * x + dx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        out[o] = src[best];
        if (argmax) (*argmax)[static_cast<std::size_t>(o)] = best;
      }
    }
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> maxpool2_backward(const Shape& input_dims, const std::vector<Index>& argmax,
                                      const BasicTensor<Scalar>& grad) {
  BasicTensor<Scalar> out(input_dims);
  for (Index o = 0; o < grad.size(); ++o) out[argmax[static_cast<std::size_t>(o)]] += grad[o];
  return out;
}

// Row-wise log-softmax of a [B,K] tensor with max subtraction.
template <typename Scalar>
BasicTensor<Scalar> log_softmax(const BasicTensor<Scalar>& x) {
  detail::require(x.rank() == 2, "log_softmax expects [B,K], got " + shape_str(x.dims()));
  BasicTensor<Scalar> out(x.dims());
  const auto X = x.matrix(x.dim(0), x.dim(1));
  auto Y = out.matrix(x.dim(0), x.dim(1));
  for (Index r = 0; r < X.rows(); ++r) {
    const Scalar m = X.row(r).maxCoeff();
    const Scalar lse = m + std::log((X.row(r).array() - m).exp().sum());
    Y.row(r) = X.row(r).array() - lse;
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> log_softmax_backward(const BasicTensor<Scalar>& out, const BasicTensor<Scalar>& grad) {
  BasicTensor<Scalar> dx(out.dims());
  const auto Y = out.matrix(out.dim(0), out.dim(1));
  const auto G = grad.matrix(out.dim(0), out.dim(1));
  auto D = dx.matrix(out.dim(0), out.dim(1));
  for (Index r = 0; r < Y.rows(); ++r) {
    D.row(r) = G.row(r).array() - Y.row(r).array().exp() * G.row(r).sum();
  }
  return dx;
}

// Concatenate [B,n_i] tensors along the column axis.
template <typename Scalar>
BasicTensor<Scalar> concat_cols(const std::vector<const BasicTensor<Scalar>*>& parts) {
  detail::require(!parts.empty(), "concat of nothing");
  const Index rows = parts.front()->rank() == 2 ? parts.front()->dim(0) : -1;
  Index cols = 0;
  for (const auto* p : parts) {
    detail::require(p->rank() == 2 && p->dim(0) == rows, "concat expects [B,n] inputs with equal B, got " +
                                                             shape_str(p->dims()));
    cols += p->dim(1);
  }
  BasicTensor<Scalar> out({rows, cols});
  auto M = out.matrix(rows, cols);
  Index c = 0;
  for (const auto* p : parts) {
    M.middleCols(c, p->dim(1)) = p->matrix(rows, p->dim(1));
    c += p->dim(1);
  }
  return out;
}

}  // namespace qadb::ops
