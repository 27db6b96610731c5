#include "qadb/qsim.hpp"

namespace qadb {

QuantumLayerParams QuantumLayerOp::params_from(const Tensor& theta, const Tensor& phi) const {
  QuantumLayerParams p;
  p.n_qubits = n_qubits_;
  p.theta = theta.data();
  p.phi = phi.data();
  p.validate();
  return p;
}

Tensor QuantumLayerOp::forward(std::span<const Tensor* const> inputs) const {
  if (inputs.size() != 3) throw ValidationError("quantum_layer takes (features, theta, phi)");
  const Tensor& features = *inputs[0];
  if (features.rank() != 2 || features.dim(1) != n_qubits_) {
    throw ShapeError("quantum_layer expects features [B," + std::to_string(n_qubits_) + "], got " +
                     shape_str(features.dims()));
  }
  const auto params = params_from(*inputs[1], *inputs[2]);
  const Index batch = features.dim(0);
  Tensor out({batch, n_qubits_});
  const auto F = features.matrix(batch, n_qubits_);
  auto Z = out.matrix(batch, n_qubits_);
  for (Index b = 0; b < batch; ++b) Z.row(b) = quantum_layer_forward(F.row(b).transpose(), params).transpose();
  return out;
}

std::vector<Tensor> QuantumLayerOp::backward(std::span<const Tensor* const> inputs, const Tensor&,
                                             const Tensor& grad) const {
  const Tensor& features = *inputs[0];
  const auto params = params_from(*inputs[1], *inputs[2]);
  const Index batch = features.dim(0);
  Tensor d_features(features.dims()), d_theta(inputs[1]->dims()), d_phi(inputs[2]->dims());
  const auto F = features.matrix(batch, n_qubits_);
  const auto G = grad.matrix(batch, n_qubits_);
  auto DF = d_features.matrix(batch, n_qubits_);
  // Per-sample terms are summed in sample order.
  for (Index b = 0; b < batch; ++b) {
    const auto g = quantum_layer_gradients(F.row(b).transpose(), params, G.row(b).transpose());
    DF.row(b) = g.d_features.transpose();
    d_theta.data() += g.d_theta;
    d_phi.data() += g.d_phi;
  }
  return {std::move(d_features), std::move(d_theta), std::move(d_phi)};
}

}  // namespace qadb
