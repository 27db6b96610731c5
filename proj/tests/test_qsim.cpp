#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

#include "qadb/qsim.hpp"

using namespace qadb;

namespace {

using CMatrix = Eigen::MatrixXcd;
using Vec = Eigen::VectorXd;
constexpr double kPi = std::numbers::pi;

// Full 2^n x 2^n operator for a single-qubit gate on `qubit`, built from
// Kronecker products (qubit 0 is the least significant bit).
CMatrix embed(const Eigen::Matrix2cd& gate, int qubit, int n) {
  CMatrix out = CMatrix::Identity(1, 1);
  for (int q = n - 1; q >= 0; --q) {
    const CMatrix f = q == qubit ? CMatrix(gate) : CMatrix(CMatrix::Identity(2, 2));
    CMatrix next(out.rows() * 2, out.cols() * 2);
    for (Index i = 0; i < out.rows(); ++i)
      for (Index j = 0; j < out.cols(); ++j) next.block(i * 2, j * 2, 2, 2) = out(i, j) * f;
    out = next;
  }
  return out;
}

Eigen::Matrix2cd ry_matrix(double a) {
  Eigen::Matrix2cd m;
  m << std::cos(a / 2), -std::sin(a / 2), std::sin(a / 2), std::cos(a / 2);
  return m;
}

CMatrix cnot_matrix(int control, int target, int n) {
  const Index dim = Index{1} << n;
  CMatrix m = CMatrix::Zero(dim, dim);
  for (Index i = 0; i < dim; ++i) {
    const Index j = (i >> control) & 1 ? i ^ (Index{1} << target) : i;
    m(j, i) = 1;
  }
  return m;
}

Vec dense_layer(const Vec& features, double theta, double phi, int n) {
  const Index dim = Index{1} << n;
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(dim);
  psi[0] = 1;
  CMatrix U = CMatrix::Identity(dim, dim);
  for (int q = 0; q < n; ++q) U = embed(ry_matrix(kPi * std::tanh(features[q])), q, n) * U;
  for (int q = 0; q < n; ++q) U = embed(ry_matrix(q % 2 == 0 ? theta : phi), q, n) * U;
  for (int q = 0; q + 1 < n; ++q) U = cnot_matrix(q, q + 1, n) * U;
  psi = U * psi;
  Vec z(n);
  for (int q = 0; q < n; ++q) {
    z[q] = 0;
    for (Index i = 0; i < dim; ++i) z[q] += ((i >> q) & 1 ? -1.0 : 1.0) * std::norm(psi[i]);
  }
  return z;
}

}  // namespace

TEST(StateVector, RyZeroIsIdentity) {
  StateVector<double> s(2, 3);
  s.ry(0, 0.0);
  EXPECT_EQ(s.amplitudes(), StateVector<double>(2, 3).amplitudes());
}

TEST(StateVector, RyPiFlipsZeroToOne) {
  const auto s = apply_ry(StateVector<double>(1), 0, kPi);
  EXPECT_NEAR(std::abs(s.amplitudes()[0]), 0.0, 1e-15);
  EXPECT_NEAR(s.amplitudes()[1].real(), 1.0, 1e-15);
}

TEST(StateVector, RyHalfPiGivesEqualSuperposition) {
  const auto s = apply_ry(StateVector<double>(1), 0, kPi / 2);
  EXPECT_NEAR(s.amplitudes()[0].real(), 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s.amplitudes()[1].real(), 1 / std::sqrt(2.0), 1e-15);
}

TEST(StateVector, CnotTruthTable) {
  // |10> in qubit order (q0 = 1, q1 = 0) is basis index 1.
  EXPECT_EQ(apply_cnot(StateVector<double>(2, 1), 0, 1).amplitudes(), StateVector<double>(2, 3).amplitudes());
  EXPECT_EQ(apply_cnot(StateVector<double>(2, 0), 0, 1).amplitudes(), StateVector<double>(2, 0).amplitudes());
}

TEST(StateVector, CnotIsAnInvolution) {
  auto s = apply_ry(apply_ry(StateVector<double>(3), 0, 0.3), 2, 1.1);
  const auto before = s.amplitudes();
  s.cnot(2, 1).cnot(2, 1);
  EXPECT_EQ(s.amplitudes(), before);
}

TEST(StateVector, RejectsBadQubits) {
  StateVector<double> s(2);
  EXPECT_THROW(s.ry(2, 0.1), ValidationError);
  EXPECT_THROW(s.cnot(1, 1), ValidationError);
  EXPECT_THROW(s.cnot(0, -1), ValidationError);
}

TEST(StateVector, NormPreservedUnderRandomGates) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> qubit(0, 5), coin(0, 1);
  std::uniform_real_distribution<double> angle(-2 * kPi, 2 * kPi);
  StateVector<double> s(6);
  for (int i = 0; i < 100; ++i) {
    if (coin(rng)) {
      s.ry(qubit(rng), angle(rng));
    } else {
      const int c = qubit(rng);
      s.cnot(c, (c + 1 + qubit(rng) % 5) % 6);
    }
    ASSERT_NEAR(s.norm_squared(), 1.0, 1e-12);
  }
}

TEST(StateVector, MatchesDenseOracleForFourQubits) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  StateVector<double> s(4);
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(16);
  psi[0] = 1;
  for (int i = 0; i < 12; ++i) {
    const double a = angle(rng);
    s.ry(i % 4, a);
    psi = embed(ry_matrix(a), i % 4, 4) * psi;
    s.cnot(i % 4, (i + 1) % 4);
    psi = cnot_matrix(i % 4, (i + 1) % 4, 4) * psi;
  }
  EXPECT_LE((s.amplitudes() - psi).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(QuantumLayer, NullCircuitReadsOne) {
  const Vec z = quantum_layer_forward(Vec::Zero(1), QuantumLayerParams::shared(1, 0.0, 0.0));
  EXPECT_NEAR(z[0], 1.0, 1e-15);
}

TEST(QuantumLayer, SingleQubitClosedForm) {
  for (int i = 0; i < 100; ++i) {
    const double theta = -kPi + 2 * kPi * i / 99.0;
    const auto p = QuantumLayerParams::shared(1, theta, 0.0);
    EXPECT_NEAR(quantum_layer_forward(Vec::Zero(1), p)[0], std::cos(theta), 1e-12);
    const auto g = quantum_layer_gradients(Vec::Zero(1), p, Vec::Ones(1));
    EXPECT_NEAR(g.d_theta[0], -std::sin(theta), 1e-10);
  }
}

TEST(QuantumLayer, ThreeQubitsMatchDenseOracle) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nrm(0, 1);
  for (int trial = 0; trial < 5; ++trial) {
    Vec f(3);
    for (auto& v : f) v = nrm(rng);
    const double theta = nrm(rng), phi = nrm(rng);
    const Vec z = quantum_layer_forward(f, QuantumLayerParams::shared(3, theta, phi));
    EXPECT_LE((z - dense_layer(f, theta, phi, 3)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(z.cwiseAbs().maxCoeff(), 1.0 + 1e-15);
  }
}

TEST(QuantumLayer, ZeroUpstreamGivesZeroGradients) {
  const auto g = quantum_layer_gradients(Vec::Constant(3, 0.4), QuantumLayerParams::shared(3, 0.2, -0.7),
                                         Vec::Zero(3));
  EXPECT_TRUE(g.d_features.isZero(0));
  EXPECT_TRUE(g.d_theta.isZero(0));
  EXPECT_TRUE(g.d_phi.isZero(0));
}

TEST(QuantumLayer, ParameterShiftMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nrm(0, 1);
  Vec f(3), up(3);
  for (auto& v : f) v = nrm(rng);
  for (auto& v : up) v = nrm(rng);
  const double theta = nrm(rng), phi = nrm(rng), h = 1e-6;
  auto loss = [&](const Vec& ff, double t, double p) {
    return up.dot(quantum_layer_forward(ff, QuantumLayerParams::shared(3, t, p)));
  };
  const auto g = quantum_layer_gradients(f, QuantumLayerParams::shared(3, theta, phi), up);
  for (int i = 0; i < 3; ++i) {
    Vec fp = f, fm = f;
    fp[i] += h;
    fm[i] -= h;
    EXPECT_NEAR(g.d_features[i], (loss(fp, theta, phi) - loss(fm, theta, phi)) / (2 * h), 1e-6);
  }
  EXPECT_NEAR(g.d_theta[0], (loss(f, theta + h, phi) - loss(f, theta - h, phi)) / (2 * h), 1e-6);
  EXPECT_NEAR(g.d_phi[0], (loss(f, theta, phi + h) - loss(f, theta, phi - h)) / (2 * h), 1e-6);
}

TEST(QuantumLayer, PerQubitAnglesUseTheirOwnSlots) {
  Vec theta(2), phi(1);
  theta << 0.3, -1.2;
  phi << 0.8;
  const auto p = QuantumLayerParams::per_qubit(3, theta, phi);
  EXPECT_DOUBLE_EQ(p.angle(0), 0.3);
  EXPECT_DOUBLE_EQ(p.angle(1), 0.8);
  EXPECT_DOUBLE_EQ(p.angle(2), -1.2);
  const Vec f = Vec::Constant(3, 0.1);
  const double h = 1e-6;
  const auto g = quantum_layer_gradients(f, p, Vec::Ones(3));
  Vec tp = theta, tm = theta;
  tp[1] += h;
  tm[1] -= h;
  const double fd = (quantum_layer_forward(f, QuantumLayerParams::per_qubit(3, tp, phi)).sum() -
                     quantum_layer_forward(f, QuantumLayerParams::per_qubit(3, tm, phi)).sum()) /
                    (2 * h);
  EXPECT_NEAR(g.d_theta[1], fd, 1e-6);
}

TEST(QuantumLayer, RejectsLengthMismatch) {
  EXPECT_THROW(quantum_layer_forward(Vec::Zero(2), QuantumLayerParams::shared(3, 0, 0)), ShapeError);
  EXPECT_THROW(QuantumLayerParams::per_qubit(3, Vec::Zero(1), Vec::Zero(1)), ValidationError);
}

TEST(QuantumLayer, BatchedOpMatchesPerSample) {
  QuantumLayerOp op(2);
  const Tensor feats({2, 2}, {0.1, -0.4, 1.3, 0.2});
  const Tensor theta({1}, {0.5}), phi({1}, {-0.9});
  const Tensor* in[] = {&feats, &theta, &phi};
  const Tensor out = op.forward(in);
  const auto p = QuantumLayerParams::shared(2, 0.5, -0.9);
  for (Index r = 0; r < 2; ++r) {
    const Vec z = quantum_layer_forward(feats.matrix(2, 2).row(r).transpose(), p);
    EXPECT_DOUBLE_EQ(out.matrix(2, 2)(r, 0), z[0]);
    EXPECT_DOUBLE_EQ(out.matrix(2, 2)(r, 1), z[1]);
  }
  const auto grads = op.backward(in, out, Tensor({2, 2}, {1, 0, 0, 1}));
  ASSERT_EQ(grads.size(), 3u);
  const auto g0 = quantum_layer_gradients(feats.matrix(2, 2).row(0).transpose(), p, Vec::Unit(2, 0));
  const auto g1 = quantum_layer_gradients(feats.matrix(2, 2).row(1).transpose(), p, Vec::Unit(2, 1));
  EXPECT_DOUBLE_EQ(grads[1][0], g0.d_theta[0] + g1.d_theta[0]);
}
