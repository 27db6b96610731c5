#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qadb/classifier.hpp"
#include "qadb/data.hpp"
#include "qadb/graph.hpp"
#include "qadb/qsim.hpp"
#include "qadb/tensor.hpp"

namespace qadb {

inline constexpr Index kImageSide = 28;

struct ModelShape {
  int n_qubits = 2;
  int n_classes = 2;
  bool per_qubit_angles = false;

  void validate() const;
  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

// conv1 (8 filters 3x3) -> relu -> pool -> conv2 (16 filters 3x3) -> relu
// -> pool -> fc1 400->64 -> relu -> fc2 64->n_qubits. Affine weights are
// stored [in, out].
struct ClassicalNet {
  Tensor conv1_weight, conv1_bias;
  Tensor conv2_weight, conv2_bias;
  Tensor fc1_weight, fc1_bias;
  Tensor fc2_weight, fc2_bias;
};

// Affine map from concat(features, expectations) to class scores.
struct Head {
  Tensor weight, bias;
};

struct HybridModel {
  ModelShape shape;
  ClassicalNet classical;
  Tensor theta, phi;
  Head head;

  QuantumLayerParams quantum() const;
};

// Visits every trainable tensor with its stable name, in a fixed order.
template <typename Model, typename Fn>
void for_each_parameter(Model& model, Fn&& fn) {
  fn("conv1.weight", model.classical.conv1_weight);
  fn("conv1.bias", model.classical.conv1_bias);
  fn("conv2.weight", model.classical.conv2_weight);
  fn("conv2.bias", model.classical.conv2_bias);
  fn("fc1.weight", model.classical.fc1_weight);
  fn("fc1.bias", model.classical.fc1_bias);
  fn("fc2.weight", model.classical.fc2_weight);
  fn("fc2.bias", model.classical.fc2_bias);
  fn("quantum.theta", model.theta);
  fn("quantum.phi", model.phi);
  fn("head.weight", model.head.weight);
  fn("head.bias", model.head.bias);
}

std::vector<std::string> parameter_names();
std::map<std::string, Tensor> parameter_map(const HybridModel& model);
Index parameter_count(const HybridModel& model);

// Fan-in scaled uniform weights; theta/phi uniform in [-pi, pi).
HybridModel init_hybrid_model(const ModelShape& shape, std::uint64_t seed);

// Throws unless every tensor has the shape implied by model.shape.
void check_model(const HybridModel& model);

// Expression graph of the full model. Leaves: "input" [B,1,28,28],
// "labels" [B] (class indices stored as reals) and one leaf per parameter.
struct HybridGraph {
  ExprGraph graph;
  NodeId features = 0;
  NodeId expectations = 0;
  NodeId logits = 0;
  NodeId log_probs = 0;
  NodeId loss = 0;
};

const HybridGraph& hybrid_graph(const ModelShape& shape);

Bindings model_bindings(const HybridModel& model);

// Mean negative log-likelihood as a graph node: (log_probs [B,K], labels [B]) -> scalar.
class NllLossOp final : public CustomOp {
 public:
  std::string name() const override { return "nll_loss"; }
  Tensor forward(std::span<const Tensor* const> inputs) const override;
  std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& output,
                               const Tensor& grad) const override;
};

// Per-row log-probabilities for images with pixels in [0,1].
Tensor forward_hybrid(const HybridModel& model, const Tensor& batch);

double nll_loss(const Tensor& log_probs, const std::vector<int>& labels);

Tensor labels_tensor(const std::vector<int>& labels);

struct TrainConfig {
  Index batch_size = 64;
  Index epochs = 10;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct AdamState {
  std::map<std::string, Tensor> m, v;
  std::int64_t t = 0;
};

// One bias-corrected Adam step over every entry of `params`.
void adam_step(std::map<std::string, Tensor>& params, const Gradients& grads, AdamState& state,
               const TrainConfig& config);
void adam_step(HybridModel& model, const Gradients& grads, AdamState& state, const TrainConfig& config);

struct TrainResult {
  HybridModel model;
  std::vector<double> loss_curve;  // sample-weighted mean loss per epoch
};

TrainResult train(HybridModel model, const Dataset& data, const TrainConfig& config);

struct AccuracyResult {
  double accuracy = 0;
  double mean_loss = 0;
};

// Argmax ties go to the lowest class index.
AccuracyResult evaluate_accuracy(const HybridModel& model, const Dataset& data);

// Mean loss and its gradient with respect to every parameter.
ValueAndGradients loss_and_gradients(const HybridModel& model, const Tensor& images, const std::vector<int>& labels);

class HybridClassifier final : public Classifier {
 public:
  explicit HybridClassifier(const HybridModel& model, Index chunk = 64);
  Index n_classes() const override { return model_.shape.n_classes; }
  Tensor logits(const Tensor& x) const override;
  Tensor logits_vjp(const Tensor& x, const Tensor& upstream) const override;
  Tensor input_gradient(const Tensor& x, const UpstreamFn& upstream) const override;

 private:
  const HybridModel& model_;
  const HybridGraph& graph_;
  Bindings params_;
  Index chunk_;
};

}  // namespace qadb
