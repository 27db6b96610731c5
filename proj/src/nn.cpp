#include "qadb/nn.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <random>

#include "qadb/ops.hpp"

namespace qadb {

namespace {

constexpr Index kConv1Filters = 8;
constexpr Index kConv2Filters = 16;
constexpr Index kKernel = 3;
constexpr Index kFlat = kConv2Filters * 5 * 5;  // 28 -conv-> 26 -pool-> 13 -conv-> 11 -pool-> 5
constexpr Index kHidden = 64;

struct ParamShapes {
  std::vector<std::pair<std::string, Shape>> entries;
};

ParamShapes param_shapes(const ModelShape& s) {
  const Index n = s.n_qubits;
  const Index theta = s.per_qubit_angles ? QuantumLayerParams::even_count(s.n_qubits) : 1;
  const Index phi = s.per_qubit_angles ? std::max<Index>(QuantumLayerParams::odd_count(s.n_qubits), 1) : 1;
  return {{{"conv1.weight", {kConv1Filters, 1, kKernel, kKernel}},
           {"conv1.bias", {kConv1Filters}},
           {"conv2.weight", {kConv2Filters, kConv1Filters, kKernel, kKernel}},
           {"conv2.bias", {kConv2Filters}},
           {"fc1.weight", {kFlat, kHidden}},
           {"fc1.bias", {kHidden}},
           {"fc2.weight", {kHidden, n}},
           {"fc2.bias", {n}},
           {"quantum.theta", {theta}},
           {"quantum.phi", {phi}},
           {"head.weight", {2 * n, s.n_classes}},
           {"head.bias", {s.n_classes}}}};
}

Index fan_in(const std::string& name, const Shape& dims) {
  if (name.starts_with("conv")) return dims[1] * dims[2] * dims[3];
  return dims[0];
}

HybridGraph build_graph(const ModelShape& shape) {
  HybridGraph h;
  auto& g = h.graph;
  const NodeId input = g.leaf("input");
  auto p = [&](const char* name) { return g.leaf(name); };
  NodeId x = g.maxpool2(g.relu(g.conv2d(input, p("conv1.weight"), p("conv1.bias"))));
  x = g.maxpool2(g.relu(g.conv2d(x, p("conv2.weight"), p("conv2.bias"))));
  x = g.reshape(x, {-1, kFlat});
  x = g.relu(g.add(g.matmul(x, p("fc1.weight")), p("fc1.bias")));
  h.features = g.add(g.matmul(x, p("fc2.weight")), p("fc2.bias"));
  h.expectations = g.custom(std::make_shared<QuantumLayerOp>(shape.n_qubits),
                            {h.features, p("quantum.theta"), p("quantum.phi")});
  const NodeId combined = g.concat({h.features, h.expectations});
  h.logits = g.add(g.matmul(combined, p("head.weight")), p("head.bias"));
  h.log_probs = g.log_softmax(h.logits);
  h.loss = g.custom(std::make_shared<NllLossOp>(), {h.log_probs, g.leaf("labels")});
  g.set_output(h.loss);
  return h;
}

void check_images(const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != kImageSide || batch.dim(3) != kImageSide) {
    throw ShapeError("model input must be [B,1,28,28], got " + shape_str(batch.dims()));
  }
  if (batch.size() > 0 && (batch.data().minCoeff() < 0.0 || batch.data().maxCoeff() > 1.0)) {
    throw ValidationError("model input pixels must lie in [0,1]");
  }
}

}  // namespace

void ModelShape::validate() const {
  if (n_qubits < 1 || n_qubits > 20) throw ValidationError("model.n_qubits must be in [1, 20]");
  if (n_classes < 2) throw ValidationError("model.n_classes must be at least 2");
}

QuantumLayerParams HybridModel::quantum() const {
  QuantumLayerParams p;
  p.n_qubits = shape.n_qubits;
  p.theta = theta.data();
  p.phi = phi.data();
  p.validate();
  return p;
}

std::vector<std::string> parameter_names() {
  std::vector<std::string> names;
  HybridModel m;
  for_each_parameter(m, [&](const char* name, Tensor&) { names.emplace_back(name); });
  return names;
}

std::map<std::string, Tensor> parameter_map(const HybridModel& model) {
  std::map<std::string, Tensor> out;
  for_each_parameter(model, [&](const char* name, const Tensor& t) { out.emplace(name, t); });
  return out;
}

Index parameter_count(const HybridModel& model) {
  Index n = 0;
  for_each_parameter(model, [&](const char*, const Tensor& t) { n += t.size(); });
  return n;
}

HybridModel init_hybrid_model(const ModelShape& shape, std::uint64_t seed) {
  shape.validate();
  HybridModel model;
  model.shape = shape;
  std::mt19937_64 rng(seed);
  const auto shapes = param_shapes(shape);
  std::size_t k = 0;
  for_each_parameter(model, [&](const char* name, Tensor& t) {
    const auto& [expected_name, dims] = shapes.entries[k++];
    t = Tensor(dims);
    double bound;
    if (expected_name.starts_with("quantum.")) {
      bound = std::numbers::pi;
    } else {
      const std::string weight = expected_name.substr(0, expected_name.find('.')) + ".weight";
      Shape wdims;
      for (const auto& [n, d] : shapes.entries) {
        if (n == weight) wdims = d;
      }
      bound = 1.0 / std::sqrt(static_cast<double>(fan_in(weight, wdims)));
    }
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
    (void)name;
  });
  return model;
}

void check_model(const HybridModel& model) {
  model.shape.validate();
  const auto shapes = param_shapes(model.shape);
  std::size_t k = 0;
  for_each_parameter(model, [&](const char* name, const Tensor& t) {
    const auto& dims = shapes.entries[k++].second;
    if (t.dims() != dims) {
      throw ShapeError(std::string("parameter ") + name + " has shape " + shape_str(t.dims()) + ", expected " +
                       shape_str(dims));
    }
    if (!all_finite(t)) throw ValidationError(std::string("parameter ") + name + " is not finite");
  });
}

const HybridGraph& hybrid_graph(const ModelShape& shape) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, bool>, std::unique_ptr<HybridGraph>> cache;
  shape.validate();
  std::lock_guard lock(mu);
  auto& slot = cache[{shape.n_qubits, shape.n_classes, shape.per_qubit_angles}];
  if (!slot) slot = std::make_unique<HybridGraph>(build_graph(shape));
  return *slot;
}

Bindings model_bindings(const HybridModel& model) {
  Bindings b;
  for_each_parameter(model, [&](const char* name, const Tensor& t) { b.emplace(name, t); });
  return b;
}

Tensor NllLossOp::forward(std::span<const Tensor* const> inputs) const {
  if (inputs.size() != 2) throw ValidationError("nll_loss takes (log_probs, labels)");
  const Tensor& lp = *inputs[0];
  const Tensor& labels = *inputs[1];
  if (lp.rank() != 2) throw ShapeError("nll_loss expects log_probs [B,K], got " + shape_str(lp.dims()));
  if (labels.rank() != 1 || labels.dim(0) != lp.dim(0)) {
    throw ShapeError("nll_loss batch mismatch: log_probs " + shape_str(lp.dims()) + ", labels " +
                     shape_str(labels.dims()));
  }
  if (lp.dim(0) == 0) throw ShapeError("nll_loss of an empty batch");
  const auto M = lp.matrix(lp.dim(0), lp.dim(1));
  double sum = 0;
  for (Index i = 0; i < lp.dim(0); ++i) {
    const double l = labels[i];
    if (l != std::floor(l) || l < 0 || l >= static_cast<double>(lp.dim(1))) {
      throw ValidationError("label " + std::to_string(l) + " outside [0, " + std::to_string(lp.dim(1)) + ")");
    }
    sum -= M(i, static_cast<Index>(l));
  }
  return Tensor::scalar(sum / static_cast<double>(lp.dim(0)));
}

std::vector<Tensor> NllLossOp::backward(std::span<const Tensor* const> inputs, const Tensor&,
                                        const Tensor& grad) const {
  const Tensor& lp = *inputs[0];
  const Tensor& labels = *inputs[1];
  Tensor d(lp.dims());
  const double scale = -grad.item() / static_cast<double>(lp.dim(0));
  for (Index i = 0; i < lp.dim(0); ++i) d[i * lp.dim(1) + static_cast<Index>(labels[i])] = scale;
  return {std::move(d), Tensor(labels.dims())};
}

Tensor labels_tensor(const std::vector<int>& labels) {
  Tensor t({static_cast<Index>(labels.size())});
  for (std::size_t i = 0; i < labels.size(); ++i) t[static_cast<Index>(i)] = labels[i];
  return t;
}

Tensor forward_hybrid(const HybridModel& model, const Tensor& batch) {
  check_images(batch);
  const auto& h = hybrid_graph(model.shape);
  Bindings b = model_bindings(model);
  b.emplace("input", batch);
  return evaluate(h.graph, b, h.log_probs);
}

double nll_loss(const Tensor& log_probs, const std::vector<int>& labels) {
  const Tensor lt = labels_tensor(labels);
  const Tensor* args[] = {&log_probs, &lt};
  return NllLossOp().forward(args).item();
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (epochs < 0) throw ValidationError("train.epochs must be >= 0");
  if (!(learning_rate > 0)) throw ValidationError("train.learning_rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ValidationError("adam betas must be in [0,1)");
  if (!(epsilon > 0)) throw ValidationError("adam epsilon must be > 0");
}

void adam_step(std::map<std::string, Tensor>& params, const Gradients& grads, AdamState& state,
               const TrainConfig& config) {
  for (const auto& [name, p] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) throw ValidationError("no gradient for parameter '" + name + "'");
    if (!g->second.same_shape(p)) {
      throw ShapeError("gradient for '" + name + "' has shape " + shape_str(g->second.dims()) + ", parameter " +
                       shape_str(p.dims()));
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    const auto& g = grads.at(name).data().array();
    auto& m = state.m.try_emplace(name, p.dims()).first->second;
    auto& v = state.v.try_emplace(name, p.dims()).first->second;
    m.data().array() = config.beta1 * m.data().array() + (1 - config.beta1) * g;
    v.data().array() = config.beta2 * v.data().array() + (1 - config.beta2) * g.square();
    p.data().array() -= config.learning_rate * (m.data().array() / bc1) /
                        ((v.data().array() / bc2).sqrt() + config.epsilon);
  }
}

void adam_step(HybridModel& model, const Gradients& grads, AdamState& state, const TrainConfig& config) {
  auto params = parameter_map(model);
  adam_step(params, grads, state, config);
  for_each_parameter(model, [&](const char* name, Tensor& t) { t = std::move(params.at(name)); });
}

ValueAndGradients loss_and_gradients(const HybridModel& model, const Tensor& images, const std::vector<int>& labels) {
  const auto& h = hybrid_graph(model.shape);
  Bindings b = model_bindings(model);
  b.emplace("input", images);
  b.emplace("labels", labels_tensor(labels));
  const auto names = parameter_names();
  return value_and_gradient(h.graph, b, std::set<std::string>(names.begin(), names.end()), h.loss);
}

TrainResult train(HybridModel model, const Dataset& data, const TrainConfig& config) {
  config.validate();
  check_model(model);
  TrainResult result{std::move(model), {}};
  if (config.epochs == 0) return result;
  if (data.empty()) throw ValidationError("cannot train on an empty dataset");
  check_images(data.images);
  check_labels(data, result.model.shape.n_classes);

  std::mt19937_64 rng(config.seed);
  AdamState adam;
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (Index start = 0; start < data.size(); start += config.batch_size) {
      const Index end = std::min(start + config.batch_size, data.size());
      const Dataset batch = data.gather(std::vector<Index>(order.begin() + start, order.begin() + end));
      auto vg = loss_and_gradients(result.model, batch.images, batch.labels);
      total += vg.value.item() * static_cast<double>(end - start);
      adam_step(result.model, vg.gradients, adam, config);
    }
    result.loss_curve.push_back(total / static_cast<double>(data.size()));
  }
  return result;
}

AccuracyResult evaluate_accuracy(const HybridModel& model, const Dataset& data) {
  if (data.empty()) throw ValidationError("cannot evaluate on an empty dataset");
  check_labels(data, model.shape.n_classes);
  constexpr Index kChunk = 256;
  Index correct = 0;
  double loss = 0;
  for (Index start = 0; start < data.size(); start += kChunk) {
    const Index end = std::min(start + kChunk, data.size());
    const Tensor lp = forward_hybrid(model, data.images.slice_rows(start, end));
    const auto M = lp.matrix(end - start, model.shape.n_classes);
    for (Index i = 0; i < end - start; ++i) {
      Index best = 0;
      M.row(i).maxCoeff(&best);  // first maximum wins
      const int label = data.labels[static_cast<std::size_t>(start + i)];
      if (best == label) ++correct;
      loss -= M(i, label);
    }
  }
  const double n = static_cast<double>(data.size());
  return {static_cast<double>(correct) / n, loss / n};
}

HybridClassifier::HybridClassifier(const HybridModel& model, Index chunk)
    : model_(model), graph_(hybrid_graph(model.shape)), params_(model_bindings(model)), chunk_(chunk) {
  check_model(model);
}

Tensor HybridClassifier::logits(const Tensor& x) const {
  check_images(x);
  std::vector<Tensor> parts;
  Bindings b = params_;
  for (Index start = 0; start < x.dim(0); start += chunk_) {
    const Index end = std::min(start + chunk_, x.dim(0));
    b.insert_or_assign("input", x.slice_rows(start, end));
    parts.push_back(evaluate(graph_.graph, b, graph_.logits));
  }
  if (parts.empty()) return Tensor({0, n_classes()});
  return concat_rows(parts);
}

Tensor HybridClassifier::logits_vjp(const Tensor& x, const Tensor& upstream) const {
  check_images(x);
  if (upstream.dims() != Shape{x.dim(0), n_classes()}) {
    throw ShapeError("logits upstream must be [N,K], got " + shape_str(upstream.dims()));
  }
  std::vector<Tensor> parts;
  Bindings b = params_;
  for (Index start = 0; start < x.dim(0); start += chunk_) {
    const Index end = std::min(start + chunk_, x.dim(0));
    b.insert_or_assign("input", x.slice_rows(start, end));
    auto g = vjp(graph_.graph, b, {"input"}, graph_.logits, upstream.slice_rows(start, end));
    parts.push_back(std::move(g.at("input")));
  }
  if (parts.empty()) return Tensor(x.dims());
  return concat_rows(parts);
}

Tensor HybridClassifier::input_gradient(const Tensor& x, const UpstreamFn& upstream) const {
  check_images(x);
  std::vector<Tensor> parts;
  Bindings b = params_;
  for (Index start = 0; start < x.dim(0); start += chunk_) {
    const Index end = std::min(start + chunk_, x.dim(0));
    b.insert_or_assign("input", x.slice_rows(start, end));
    const GraphRun run(graph_.graph, b, graph_.logits);
    const Tensor u = upstream(start, run.root_value());
    if (u.dims() != run.root_value().dims()) {
      throw ShapeError("logits upstream must be " + shape_str(run.root_value().dims()) + ", got " +
                       shape_str(u.dims()));
    }
    parts.push_back(std::move(run.backward({"input"}, u).at("input")));
  }
  if (parts.empty()) return Tensor(x.dims());
  return concat_rows(parts);
}

}  // namespace qadb
