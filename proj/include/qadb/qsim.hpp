#pragma once

// Statevector simulation of the hybrid model's variational circuit.
//
// Basis ordering is little-endian: qubit q is bit q of the basis index.
// The layer circuit on n qubits, starting from |0...0>, is
//   ry(pi * tanh(f_i)) on every qubit i        (feature encoding)
//   ry(theta) on even qubits, ry(phi) on odd   (trainable rotations)
//   CNOT(i, i+1) for i = 0 .. n-2              (entangling chain)
// followed by a <Z_i> readout on every qubit.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "qadb/errors.hpp"
#include "qadb/graph.hpp"
#include "qadb/tensor.hpp"

namespace qadb {

template <typename Scalar>
class StateVector {
 public:
  using Complex = std::complex<Scalar>;
  using Amplitudes = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;

  // |0...0>
  explicit StateVector(int n_qubits) : StateVector(n_qubits, 0) {}

  StateVector(int n_qubits, Index basis_index) : n_qubits_(n_qubits) {
    if (n_qubits < 1 || n_qubits > 30) {
      throw ValidationError("n_qubits must be in [1, 30], got " + std::to_string(n_qubits));
    }
    amps_ = Amplitudes::Zero(Index{1} << n_qubits);
    if (basis_index < 0 || basis_index >= amps_.size()) throw ValidationError("basis index out of range");
    amps_[basis_index] = Complex(1);
  }

  int n_qubits() const { return n_qubits_; }
  Index dimension() const { return amps_.size(); }
  const Amplitudes& amplitudes() const { return amps_; }
  Amplitudes& amplitudes() { return amps_; }

  Scalar norm_squared() const { return amps_.squaredNorm(); }

  StateVector& ry(int qubit, Scalar angle) {
    check_qubit(qubit);
    const Scalar c = std::cos(angle / 2), s = std::sin(angle / 2);
    const Index bit = Index{1} << qubit;
    for (Index i = 0; i < amps_.size(); ++i) {
      if (i & bit) continue;
      const Complex a0 = amps_[i], a1 = amps_[i | bit];
      amps_[i] = c * a0 - s * a1;
      amps_[i | bit] = s * a0 + c * a1;
    }
    return *this;
  }

  StateVector& cnot(int control, int target) {
    check_qubit(control);
    check_qubit(target);
    if (control == target) throw ValidationError("CNOT control and target must differ");
    const Index cbit = Index{1} << control, tbit = Index{1} << target;
    for (Index i = 0; i < amps_.size(); ++i) {
      if ((i & cbit) && !(i & tbit)) std::swap(amps_[i], amps_[i | tbit]);
    }
    return *this;
  }

  // <Z_q> = P(bit q = 0) - P(bit q = 1)
  Scalar expectation_z(int qubit) const {
    check_qubit(qubit);
    const Index bit = Index{1} << qubit;
    Scalar e = 0;
    for (Index i = 0; i < amps_.size(); ++i) e += (i & bit ? -1 : 1) * std::norm(amps_[i]);
    return e;
  }

 private:
  void check_qubit(int q) const {
    if (q < 0 || q >= n_qubits_) {
      throw ValidationError("qubit " + std::to_string(q) + " out of range for " + std::to_string(n_qubits_) +
                            "-qubit state");
    }
  }

  int n_qubits_;
  Amplitudes amps_;
};

template <typename Scalar>
StateVector<Scalar> apply_ry(StateVector<Scalar> state, int qubit, Scalar angle) {
  state.ry(qubit, angle);
  return state;
}

template <typename Scalar>
StateVector<Scalar> apply_cnot(StateVector<Scalar> state, int control, int target) {
  state.cnot(control, target);
  return state;
}

// Trainable angles of the layer. Shared mode keeps one theta and one phi for
// all qubits; per-qubit mode keeps one theta per even qubit and one phi per
// odd qubit.
template <typename Scalar>
struct BasicQuantumLayerParams {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  int n_qubits = 1;
  Vector theta = Vector::Zero(1);
  Vector phi = Vector::Zero(1);

  static BasicQuantumLayerParams shared(int n_qubits, Scalar theta, Scalar phi) {
    BasicQuantumLayerParams p;
    p.n_qubits = n_qubits;
    p.theta = Vector::Constant(1, theta);
    p.phi = Vector::Constant(1, phi);
    return p;
  }

  static BasicQuantumLayerParams per_qubit(int n_qubits, Vector theta, Vector phi) {
    BasicQuantumLayerParams p;
    p.n_qubits = n_qubits;
    p.theta = std::move(theta);
    p.phi = std::move(phi);
    if (p.theta.size() != even_count(n_qubits) || p.phi.size() != std::max<Index>(odd_count(n_qubits), 1)) {
      throw ValidationError("per-qubit angles need " + std::to_string(even_count(n_qubits)) + " theta and " +
                            std::to_string(odd_count(n_qubits)) + " phi values");
    }
    p.validate();
    return p;
  }

  static Index even_count(int n) { return (n + 1) / 2; }
  static Index odd_count(int n) { return n / 2; }

  // Index into theta (even qubit) or phi (odd qubit) used by `qubit`.
  Index slot(int qubit) const {
    const Index per = qubit / 2;
    return (qubit % 2 == 0 ? theta.size() : phi.size()) == 1 ? 0 : per;
  }

  Scalar angle(int qubit) const { return qubit % 2 == 0 ? theta[slot(qubit)] : phi[slot(qubit)]; }

  void validate() const {
    if (n_qubits < 1) throw ValidationError("quantum layer needs at least one qubit");
    if ((theta.size() != 1 && theta.size() != even_count(n_qubits)) ||
        (phi.size() != 1 && phi.size() != odd_count(n_qubits))) {
      throw ValidationError("quantum layer angle vectors have the wrong length for " + std::to_string(n_qubits) +
                            " qubits");
    }
    if (!theta.allFinite() || !phi.allFinite()) throw ValidationError("quantum layer angles must be finite");
  }
};

using QuantumLayerParams = BasicQuantumLayerParams<double>;

namespace qsim_detail {

// Circuit with every ry angle given explicitly: entries [0, n) encode the
// features, entries [n, 2n) are the trainable rotations.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> run_circuit(int n, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& angles) {
  StateVector<Scalar> state(n);
  for (int q = 0; q < n; ++q) state.ry(q, angles[q]);
  for (int q = 0; q < n; ++q) state.ry(q, angles[n + q]);
  for (int q = 0; q + 1 < n; ++q) state.cnot(q, q + 1);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z(n);
  for (int q = 0; q < n; ++q) z[q] = state.expectation_z(q);
  return z;
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> circuit_angles(const Eigen::MatrixBase<Derived>& features,
                                                       const BasicQuantumLayerParams<Scalar>& params) {
  const int n = params.n_qubits;
  if (features.size() != n) {
    throw ShapeError("quantum layer expects " + std::to_string(n) + " features, got " +
                     std::to_string(features.size()));
  }
  params.validate();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> angles(2 * n);
  for (int q = 0; q < n; ++q) {
    angles[q] = std::numbers::pi_v<Scalar> * std::tanh(features[q]);
    angles[n + q] = params.angle(q);
  }
  return angles;
}

}  // namespace qsim_detail

// <Z_i> for each qubit after the layer circuit.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> quantum_layer_forward(const Eigen::MatrixBase<Derived>& features,
                                                              const BasicQuantumLayerParams<Scalar>& params) {
  return qsim_detail::run_circuit<Scalar>(params.n_qubits, qsim_detail::circuit_angles(features, params));
}

template <typename Scalar>
struct BasicQuantumLayerGradients {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> d_features, d_theta, d_phi;
};

using QuantumLayerGradients = BasicQuantumLayerGradients<double>;

// Parameter-shift gradients of upstream . <Z>. Every ry occurrence is shifted
// by +-pi/2 on its own; shared angles sum their per-occurrence terms.
template <typename Scalar, typename DerivedF, typename DerivedU>
BasicQuantumLayerGradients<Scalar> quantum_layer_gradients(const Eigen::MatrixBase<DerivedF>& features,
                                                           const BasicQuantumLayerParams<Scalar>& params,
                                                           const Eigen::MatrixBase<DerivedU>& upstream) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const int n = params.n_qubits;
  if (upstream.size() != n) {
    throw ShapeError("quantum layer upstream needs " + std::to_string(n) + " entries, got " +
                     std::to_string(upstream.size()));
  }
  const Vector angles = qsim_detail::circuit_angles(features, params);
  BasicQuantumLayerGradients<Scalar> g{Vector::Zero(n), Vector::Zero(params.theta.size()),
                                       Vector::Zero(params.phi.size())};
  if (upstream.isZero(0)) return g;
  const Scalar shift = std::numbers::pi_v<Scalar> / 2;
  Vector d_angle(2 * n);
  Vector shifted = angles;
  for (Index k = 0; k < 2 * n; ++k) {
    shifted[k] = angles[k] + shift;
    const Vector plus = qsim_detail::run_circuit<Scalar>(n, shifted);
    shifted[k] = angles[k] - shift;
    const Vector minus = qsim_detail::run_circuit<Scalar>(n, shifted);
    shifted[k] = angles[k];
    d_angle[k] = upstream.dot((plus - minus) / 2);
  }
  for (int q = 0; q < n; ++q) {
    const Scalar t = std::tanh(features[q]);
    g.d_features[q] = d_angle[q] * std::numbers::pi_v<Scalar> * (1 - t * t);
    if (q % 2 == 0) {
      g.d_theta[params.slot(q)] += d_angle[n + q];
    } else {
      g.d_phi[params.slot(q)] += d_angle[n + q];
    }
  }
  return g;
}

// Graph node wrapping the layer for a batch: inputs (features [B,n],
// theta [k], phi [m]) -> expectations [B,n]. Gradients use the
// parameter-shift rule.
class QuantumLayerOp final : public CustomOp {
 public:
  explicit QuantumLayerOp(int n_qubits) : n_qubits_(n_qubits) {}
  std::string name() const override { return "quantum_layer"; }
  Tensor forward(std::span<const Tensor* const> inputs) const override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& output,
                               const Tensor& grad) const override;

 private:
  QuantumLayerParams params_from(const Tensor& theta, const Tensor& phi) const;
  int n_qubits_;
};

}  // namespace qadb
