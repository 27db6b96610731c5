#include "qadb/graph.hpp"

#include <algorithm>

#include "qadb/ops.hpp"

namespace qadb {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::matmul: return "matmul";
    case OpKind::conv2d: return "conv2d";
    case OpKind::maxpool2: return "maxpool2";
    case OpKind::relu: return "relu";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::concat: return "concat";
    case OpKind::reshape: return "reshape";
    case OpKind::custom: return "custom";
  }
  return "?";
}

NodeId ExprGraph::push(Node node) {
  for (NodeId in : node.inputs) {
    if (in >= nodes_.size()) {
      throw ValidationError("node input " + std::to_string(in) + " does not exist");
    }
  }
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId ExprGraph::leaf(const std::string& name) {
  if (auto it = leaves_.find(name); it != leaves_.end()) return it->second;
  const NodeId id = push({OpKind::leaf, {}, name, {}, nullptr});
  leaves_.emplace(name, id);
  return id;
}

NodeId ExprGraph::add(NodeId a, NodeId b) { return push({OpKind::add, {a, b}, {}, {}, nullptr}); }
NodeId ExprGraph::mul(NodeId a, NodeId b) { return push({OpKind::mul, {a, b}, {}, {}, nullptr}); }
NodeId ExprGraph::matmul(NodeId a, NodeId b) { return push({OpKind::matmul, {a, b}, {}, {}, nullptr}); }
NodeId ExprGraph::conv2d(NodeId input, NodeId kernels, NodeId bias) {
  return push({OpKind::conv2d, {input, kernels, bias}, {}, {}, nullptr});
}
NodeId ExprGraph::maxpool2(NodeId input) { return push({OpKind::maxpool2, {input}, {}, {}, nullptr}); }
NodeId ExprGraph::relu(NodeId x) { return push({OpKind::relu, {x}, {}, {}, nullptr}); }
NodeId ExprGraph::log_softmax(NodeId x) { return push({OpKind::log_softmax, {x}, {}, {}, nullptr}); }

NodeId ExprGraph::concat(std::vector<NodeId> parts) {
  if (parts.empty()) throw ValidationError("concat needs at least one input");
  return push({OpKind::concat, std::move(parts), {}, {}, nullptr});
}

NodeId ExprGraph::reshape(NodeId x, Shape dims) {
  if (std::count(dims.begin(), dims.end(), Index{-1}) > 1) {
    throw ValidationError("reshape allows at most one inferred extent");
  }
  return push({OpKind::reshape, {x}, {}, std::move(dims), nullptr});
}

NodeId ExprGraph::custom(std::shared_ptr<const CustomOp> op, std::vector<NodeId> inputs) {
  if (!op) throw ValidationError("custom node without an operation");
  return push({OpKind::custom, std::move(inputs), {}, {}, std::move(op)});
}

void ExprGraph::set_output(NodeId id) {
  if (id >= nodes_.size()) throw ValidationError("output node " + std::to_string(id) + " does not exist");
  output_ = id;
}

NodeId ExprGraph::output() const {
  if (output_) return *output_;
  if (nodes_.empty()) throw ValidationError("empty graph has no output");
  return nodes_.size() - 1;
}

std::vector<std::string> ExprGraph::leaf_names() const {
  std::vector<std::string> names;
  for (const auto& [name, id] : leaves_) names.push_back(name);
  return names;
}

std::string ExprGraph::describe(NodeId id) const {
  const Node& n = nodes_.at(id);
  std::string s = "node " + std::to_string(id) + " (" + std::string(op_name(n.kind));
  if (n.kind == OpKind::leaf) s += " '" + n.leaf_name + "'";
  if (n.kind == OpKind::custom) s += " " + n.op->name();
  return s + ")";
}

GraphRun::GraphRun(const ExprGraph& graph, const Bindings& bindings, NodeId root)
    : graph_(graph), root_(root), needed_(graph.nodes_.size(), false), values_(graph.nodes_.size()),
      argmax_(graph.nodes_.size()) {
  if (root >= graph.nodes_.size()) throw ValidationError("root node " + std::to_string(root) + " does not exist");
  needed_[root] = true;
  for (NodeId id = root + 1; id-- > 0;) {
    if (!needed_[id]) continue;
    for (NodeId in : graph.nodes_[id].inputs) needed_[in] = true;
  }
  for (NodeId id = 0; id <= root; ++id) {
    if (!needed_[id]) continue;
    const auto& node = graph.nodes_[id];
    if (node.kind == OpKind::leaf) {
      auto it = bindings.find(node.leaf_name);
      if (it == bindings.end()) throw ValidationError(graph.describe(id) + ": unbound leaf");
      values_[id] = it->second;
      continue;
    }
    try {
      values_[id] = eval_node(id);
    } catch (const ShapeError& e) {
      throw ShapeError(graph.describe(id) + ": " + e.what());
    }
  }
}

const Tensor& GraphRun::value(NodeId id) const {
  if (id >= values_.size() || !values_[id]) {
    throw ValidationError("node " + std::to_string(id) + " was not evaluated in this run");
  }
  return *values_[id];
}

Tensor GraphRun::eval_node(NodeId id) {
  const auto& node = graph_.nodes_[id];
  auto in = [&](std::size_t i) -> const Tensor& { return *values_[node.inputs[i]]; };
  switch (node.kind) {
    case OpKind::add: return ops::add(in(0), in(1));
    case OpKind::mul: return ops::mul(in(0), in(1));
    case OpKind::matmul: return ops::matmul(in(0), in(1));
    case OpKind::conv2d: return ops::conv2d(in(0), in(1), in(2));
    case OpKind::maxpool2: return ops::maxpool2(in(0), &argmax_[id]);
    case OpKind::relu: return ops::relu(in(0));
    case OpKind::log_softmax: return ops::log_softmax(in(0));
    case OpKind::concat: {
      std::vector<const Tensor*> parts;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) parts.push_back(&in(i));
      return ops::concat_cols(parts);
    }
    case OpKind::reshape: {
      Shape dims = node.shape;
      auto wild = std::find(dims.begin(), dims.end(), Index{-1});
      if (wild != dims.end()) {
        *wild = 1;
        const Index known = shape_size(dims);
        if (known == 0 || in(0).size() % known != 0) {
          throw ShapeError("cannot reshape " + shape_str(in(0).dims()) + " to " + shape_str(node.shape));
        }
        *wild = in(0).size() / known;
      }
      return in(0).reshaped(dims);
    }
    case OpKind::custom: {
      std::vector<const Tensor*> args;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) args.push_back(&in(i));
      return node.op->forward(args);
    }
    case OpKind::leaf: break;
  }
  throw ValidationError("unreachable op");
}

Gradients GraphRun::backward(const std::set<std::string>& wrt, const Tensor& upstream) const {
  for (const auto& name : wrt) {
    if (!graph_.has_leaf(name)) throw ValidationError("gradient requested for unknown leaf '" + name + "'");
  }
  if (!upstream.same_shape(root_value())) {
    throw ShapeError("upstream gradient " + shape_str(upstream.dims()) + " does not match root " +
                     shape_str(root_value().dims()));
  }
  // Only nodes with a path to a requested leaf receive gradients.
  std::vector<bool> wants(values_.size(), false);
  for (NodeId id = 0; id <= root_; ++id) {
    if (!needed_[id]) continue;
    const auto& node = graph_.nodes_[id];
    if (node.kind == OpKind::leaf) {
      wants[id] = wrt.count(node.leaf_name) != 0;
    } else {
      for (NodeId in : node.inputs) wants[id] = wants[id] || wants[in];
    }
  }
  std::vector<std::optional<Tensor>> grads(values_.size());
  if (wants[root_]) grads[root_] = upstream;
  auto accumulate = [&](NodeId id, Tensor g) {
    if (!wants[id]) return;
    if (!grads[id]) {
      grads[id] = std::move(g);
    } else {
      grads[id]->data() += g.data();
    }
  };
  for (NodeId id = root_ + 1; id-- > 0;) {
    if (!grads[id]) continue;
    const auto& node = graph_.nodes_[id];
    const Tensor& g = *grads[id];
    auto in = [&](std::size_t i) -> const Tensor& { return *values_[node.inputs[i]]; };
    switch (node.kind) {
      case OpKind::leaf: break;
      case OpKind::add:
        accumulate(node.inputs[0], g);
        accumulate(node.inputs[1], ops::add_backward_rhs(in(1), g));
        break;
      case OpKind::mul:
        accumulate(node.inputs[0], ops::mul_backward(in(0), in(1), g));
        accumulate(node.inputs[1], ops::mul_backward(in(1), in(0), g));
        break;
      case OpKind::matmul: {
        auto [da, db] = ops::matmul_backward(in(0), in(1), g);
        accumulate(node.inputs[0], std::move(da));
        accumulate(node.inputs[1], std::move(db));
        break;
      }
      case OpKind::conv2d: {
        auto cg = ops::conv2d_backward(in(0), in(1), g, wants[node.inputs[0]]);
        accumulate(node.inputs[0], std::move(cg.input));
        accumulate(node.inputs[1], std::move(cg.kernels));
        accumulate(node.inputs[2], std::move(cg.bias));
        break;
      }
      case OpKind::maxpool2:
        accumulate(node.inputs[0], ops::maxpool2_backward(in(0).dims(), argmax_[id], g));
        break;
      case OpKind::relu: accumulate(node.inputs[0], ops::relu_backward(in(0), g)); break;
      case OpKind::log_softmax: accumulate(node.inputs[0], ops::log_softmax_backward(value(id), g)); break;
      case OpKind::concat: {
        const Index rows = g.dim(0);
        const auto G = g.matrix(rows, g.dim(1));
        Index c = 0;
        for (std::size_t i = 0; i < node.inputs.size(); ++i) {
          const Index w = in(i).dim(1);
          Tensor part({rows, w});
          part.matrix(rows, w) = G.middleCols(c, w);
          c += w;
          accumulate(node.inputs[i], std::move(part));
        }
        break;
      }
      case OpKind::reshape: accumulate(node.inputs[0], g.reshaped(in(0).dims())); break;
      case OpKind::custom: {
        std::vector<const Tensor*> args;
        for (std::size_t i = 0; i < node.inputs.size(); ++i) args.push_back(&in(i));
        auto parts = node.op->backward(args, value(id), g);
        if (parts.size() != node.inputs.size()) {
          throw ValidationError(graph_.describe(id) + ": backward returned wrong arity");
        }
        for (std::size_t i = 0; i < parts.size(); ++i) {
          if (!parts[i].same_shape(in(i))) {
            throw ShapeError(graph_.describe(id) + ": gradient shape " + shape_str(parts[i].dims()) +
                             " does not match input " + shape_str(in(i).dims()));
          }
          accumulate(node.inputs[i], std::move(parts[i]));
        }
        break;
      }
    }
  }
  Gradients out;
  for (const auto& name : wrt) {
    const NodeId id = graph_.leaves_.at(name);
    if (grads[id]) {
      out.emplace(name, std::move(*grads[id]));
    } else if (needed_[id]) {
      out.emplace(name, Tensor(value(id).dims()));
    } else {
      throw ValidationError("leaf '" + name + "' does not feed the requested root");
    }
  }
  return out;
}

Tensor evaluate(const ExprGraph& graph, const Bindings& bindings) { return evaluate(graph, bindings, graph.output()); }

Tensor evaluate(const ExprGraph& graph, const Bindings& bindings, NodeId root) {
  return GraphRun(graph, bindings, root).root_value();
}

Gradients gradient(const ExprGraph& graph, const Bindings& bindings, const std::set<std::string>& wrt) {
  return gradient(graph, bindings, wrt, graph.output());
}

Gradients gradient(const ExprGraph& graph, const Bindings& bindings, const std::set<std::string>& wrt,
                   NodeId root) {
  return value_and_gradient(graph, bindings, wrt, root).gradients;
}

ValueAndGradients value_and_gradient(const ExprGraph& graph, const Bindings& bindings,
                                     const std::set<std::string>& wrt, NodeId root) {
  for (const auto& name : wrt) {
    if (!graph.has_leaf(name)) throw ValidationError("gradient requested for unknown leaf '" + name + "'");
  }
  GraphRun run(graph, bindings, root);
  if (run.root_value().size() != 1) {
    throw ShapeError(graph.describe(root) + ": gradient needs a scalar root, got shape " +
                     shape_str(run.root_value().dims()));
  }
  Tensor seed(run.root_value().dims());
  seed[0] = 1.0;
  return {run.root_value(), run.backward(wrt, seed)};
}

Gradients vjp(const ExprGraph& graph, const Bindings& bindings, const std::set<std::string>& wrt, NodeId root,
              const Tensor& upstream) {
  GraphRun run(graph, bindings, root);
  return run.backward(wrt, upstream);
}

}  // namespace qadb
