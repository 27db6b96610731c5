#include <gtest/gtest.h>

#include <random>

#include "qadb/ops.hpp"
#include "qadb/tensor.hpp"

using namespace qadb;

namespace {

Tensor random_tensor(Shape dims, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(dims));
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Direct six-loop cross-correlation.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b) {
  const Index B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = w.dim(0), k = w.dim(2);
  const Index oh = H - k + 1, ow = W - k + 1;
  Tensor out({B, F, oh, ow});
  for (Index n = 0; n < B; ++n)
    for (Index f = 0; f < F; ++f)
      for (Index i = 0; i < oh; ++i)
        for (Index j = 0; j < ow; ++j) {
          double s = b[f];
          for (Index c = 0; c < C; ++c)
            for (Index di = 0; di < k; ++di)
              for (Index dj = 0; dj < k; ++dj)
                s += x[((n * C + c) * H + i + di) * W + j + dj] * w[((f * C + c) * k + di) * k + dj];
          out[((n * F + f) * oh + i) * ow + j] = s;
        }
  return out;
}

// Central differences of sum(upstream * f(x)) with respect to x.
template <typename F>
Tensor numeric_vjp(F f, Tensor x, const Tensor& upstream, double h = 1e-6) {
  Tensor g(x.dims());
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x).data().dot(upstream.data());
    x[i] = orig - h;
    const double down = f(x).data().dot(upstream.data());
    x[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(Tensor, ZerosAndShape) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.rank(), 3);
  EXPECT_EQ(t.size(), 24);
  EXPECT_TRUE(t.data().isZero(0));
  EXPECT_EQ(shape_str(t.dims()), "[2,3,4]");
}

TEST(Tensor, ScalarHoldsOneElement) {
  const Tensor s = Tensor::scalar(2.5);
  EXPECT_EQ(s.rank(), 0);
  EXPECT_DOUBLE_EQ(s.item(), 2.5);
}

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(Tensor({-1}), ShapeError);
}

TEST(Tensor, MatrixViewIsRowMajor) {
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto m = t.matrix(2, 3);
  EXPECT_EQ(m(0, 2), 3);
  EXPECT_EQ(m(1, 0), 4);
  EXPECT_THROW(t.matrix(4, 2), ShapeError);
}

TEST(Tensor, SliceAndConcatRows) {
  const Tensor t({3, 2}, {1, 2, 3, 4, 5, 6});
  const Tensor a = t.slice_rows(0, 1), b = t.slice_rows(1, 3);
  EXPECT_EQ(b.dims(), (Shape{2, 2}));
  EXPECT_EQ(b[0], 3);
  EXPECT_EQ(concat_rows(std::vector<Tensor>{a, b}), t);
  EXPECT_THROW(t.slice_rows(2, 4), ShapeError);
}

TEST(Tensor, ReshapeKeepsData) {
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.data(), t.data());
  EXPECT_THROW(t.reshaped({4}), ShapeError);
}

TEST(Ops, MatmulMatchesHandComputation) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 1}, {5, 6});
  const Tensor c = ops::matmul(a, b);
  EXPECT_EQ(c.dims(), (Shape{2, 1}));
  EXPECT_EQ(c[0], 17);
  EXPECT_EQ(c[1], 39);
  EXPECT_THROW(ops::matmul(b, b), ShapeError);
}

TEST(Ops, MatmulBackwardMatchesFiniteDifferences) {
  const Tensor a = random_tensor({3, 4}, 1), b = random_tensor({4, 2}, 2), up = random_tensor({3, 2}, 3);
  const auto [ga, gb] = ops::matmul_backward(a, b, up);
  const Tensor na = numeric_vjp([&](const Tensor& x) { return ops::matmul(x, b); }, a, up);
  const Tensor nb = numeric_vjp([&](const Tensor& x) { return ops::matmul(a, x); }, b, up);
  EXPECT_LT((ga.data() - na.data()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((gb.data() - nb.data()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ops, AddBroadcastsBias) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor bias({2}, {10, 20});
  const Tensor c = ops::add(a, bias);
  EXPECT_EQ(c, Tensor({2, 2}, {11, 22, 13, 24}));
  const Tensor g = ops::add_backward_rhs(bias, Tensor({2, 2}, {1, 1, 1, 2}));
  EXPECT_EQ(g, Tensor({2}, {2, 3}));
}

TEST(Ops, ReluSubgradientIsZeroAtZero) {
  const Tensor x({3}, {-1, 0, 2});
  EXPECT_EQ(ops::relu(x), Tensor({3}, {0, 0, 2}));
  EXPECT_EQ(ops::relu_backward(x, Tensor({3}, {5, 5, 5})), Tensor({3}, {0, 0, 5}));
}

TEST(Ops, Conv2dMatchesNaiveLoop) {
  const Tensor x = random_tensor({2, 3, 7, 6}, 4), w = random_tensor({4, 3, 3, 3}, 5), b = random_tensor({4}, 6);
  const Tensor fast = ops::conv2d(x, w, b), slow = naive_conv(x, w, b);
  ASSERT_EQ(fast.dims(), slow.dims());
  EXPECT_LT((fast.data() - slow.data()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ops, Conv2dBackwardMatchesFiniteDifferences) {
  const Tensor x = random_tensor({2, 2, 5, 5}, 7), w = random_tensor({3, 2, 3, 3}, 8), b = random_tensor({3}, 9);
  const Tensor up = random_tensor({2, 3, 3, 3}, 10);
  const auto g = ops::conv2d_backward(x, w, up);
  const Tensor nx = numeric_vjp([&](const Tensor& t) { return ops::conv2d(t, w, b); }, x, up);
  const Tensor nw = numeric_vjp([&](const Tensor& t) { return ops::conv2d(x, t, b); }, w, up);
  const Tensor nb = numeric_vjp([&](const Tensor& t) { return ops::conv2d(x, w, t); }, b, up);
  EXPECT_LT((g.input.data() - nx.data()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((g.kernels.data() - nw.data()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((g.bias.data() - nb.data()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ops, Conv2dRejectsChannelMismatch) {
  EXPECT_THROW(ops::conv2d(Tensor({1, 2, 5, 5}), Tensor({1, 3, 3, 3}), Tensor({1})), ShapeError);
}

TEST(Ops, MaxPoolPicksFirstMaximumAndRoutesGradient) {
  const Tensor x({1, 1, 2, 4}, {1, 3, 2, 2, 3, 0, 2, 1});
  std::vector<Index> argmax;
  const Tensor y = ops::maxpool2(x, &argmax);
  EXPECT_EQ(y, Tensor({1, 1, 1, 2}, {3, 2}));
  EXPECT_EQ(argmax, (std::vector<Index>{1, 2}));
  const Tensor g = ops::maxpool2_backward(x.dims(), argmax, Tensor({1, 1, 1, 2}, {7, 9}));
  EXPECT_EQ(g, Tensor({1, 1, 2, 4}, {0, 7, 9, 0, 0, 0, 0, 0}));
}

TEST(Ops, MaxPoolDropsOddEdge) {
  EXPECT_EQ(ops::maxpool2(Tensor({1, 1, 5, 5})).dims(), (Shape{1, 1, 2, 2}));
}

TEST(Ops, LogSoftmaxIsStableAndNormalized) {
  const Tensor x({2, 3}, {1000, 1001, 1002, -5, 0, 5});
  const Tensor y = ops::log_softmax(x);
  ASSERT_TRUE(all_finite(y));
  for (Index r = 0; r < 2; ++r) EXPECT_NEAR(y.matrix(2, 3).row(r).array().exp().sum(), 1.0, 1e-12);
  EXPECT_NEAR(y[2], -std::log(1 + std::exp(-1.0) + std::exp(-2.0)), 1e-12);
}

TEST(Ops, LogSoftmaxBackwardMatchesFiniteDifferences) {
  const Tensor x = random_tensor({3, 4}, 11, -3, 3), up = random_tensor({3, 4}, 12);
  const Tensor g = ops::log_softmax_backward(ops::log_softmax(x), up);
  const Tensor n = numeric_vjp([](const Tensor& t) { return ops::log_softmax(t); }, x, up);
  EXPECT_LT((g.data() - n.data()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ops, ConcatColumns) {
  const Tensor a({2, 1}, {1, 2}), b({2, 2}, {3, 4, 5, 6});
  EXPECT_EQ(ops::concat_cols<double>({&a, &b}), Tensor({2, 3}, {1, 3, 4, 2, 5, 6}));
  const Tensor c({3, 1});
  EXPECT_THROW(ops::concat_cols<double>({&a, &c}), ShapeError);
}

TEST(Ops, FloatInstantiation) {
  const BasicTensor<float> a({1, 2}, {1.f, 2.f}), b({2, 1}, {3.f, 4.f});
  EXPECT_FLOAT_EQ(ops::matmul(a, b).item(), 11.f);
}
