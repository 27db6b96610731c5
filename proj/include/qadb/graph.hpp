#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qadb/tensor.hpp"

namespace qadb {

using NodeId = std::size_t;
using Bindings = std::map<std::string, Tensor>;
using Gradients = std::map<std::string, Tensor>;

// User-defined differentiable operation. backward() returns one gradient per
// input, each shaped like that input (zeros for non-differentiable inputs).
class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual std::string name() const = 0;
  virtual Tensor forward(std::span<const Tensor* const> inputs) const = 0;
  virtual std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& output,
                                       const Tensor& grad) const = 0;
};

enum class OpKind { leaf, add, mul, matmul, conv2d, maxpool2, relu, log_softmax, concat, reshape, custom };

std::string_view op_name(OpKind kind);

// Static DAG of operations over named leaves. Nodes may only reference
// earlier nodes, so the graph is acyclic and node ids are a topological order.
class ExprGraph {
 public:
  // Declares a leaf; repeated declarations of one name return the same node.
  NodeId leaf(const std::string& name);

  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId conv2d(NodeId input, NodeId kernels, NodeId bias);
  NodeId maxpool2(NodeId input);
  NodeId relu(NodeId x);
  NodeId log_softmax(NodeId x);
  NodeId concat(std::vector<NodeId> parts);
  // One extent may be -1 and is inferred from the input size.
  NodeId reshape(NodeId x, Shape dims);
  NodeId custom(std::shared_ptr<const CustomOp> op, std::vector<NodeId> inputs);

  // Root used by evaluate()/gradient() when none is given; defaults to the
  // most recently added node.
  void set_output(NodeId id);
  NodeId output() const;

  std::size_t size() const { return nodes_.size(); }
  bool has_leaf(const std::string& name) const { return leaves_.count(name) != 0; }
  std::vector<std::string> leaf_names() const;
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  std::string describe(NodeId id) const;

 private:
  friend class GraphRun;

  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    std::string leaf_name;
    Shape shape;
    std::shared_ptr<const CustomOp> op;
  };

  NodeId push(Node node);

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> leaves_;
  std::optional<NodeId> output_;
};

// Results of one forward pass: every node needed by the root is evaluated
// exactly once and cached here.
class GraphRun {
 public:
  GraphRun(const ExprGraph& graph, const Bindings& bindings, NodeId root);

  const Tensor& value(NodeId id) const;
  const Tensor& root_value() const { return value(root_); }

  // Reverse sweep seeded with `upstream` (shaped like the root value).
  Gradients backward(const std::set<std::string>& wrt, const Tensor& upstream) const;

 private:
  Tensor eval_node(NodeId id);

  const ExprGraph& graph_;
  NodeId root_;
  std::vector<bool> needed_;
  std::vector<std::optional<Tensor>> values_;
  std::vector<std::vector<Index>> argmax_;
};

Tensor evaluate(const ExprGraph& graph, const Bindings& bindings);
Tensor evaluate(const ExprGraph& graph, const Bindings& bindings, NodeId root);

// Gradient of a scalar root with respect to the named leaves.
Gradients gradient(const ExprGraph& graph, const Bindings& bindings, const std::set<std::string>& wrt);
Gradients gradient(const ExprGraph& graph, const Bindings& bindings, const std::set<std::string>& wrt,
                   NodeId root);

struct ValueAndGradients {
  Tensor value;
  Gradients gradients;
};

ValueAndGradients value_and_gradient(const ExprGraph& graph, const Bindings& bindings,
                                     const std::set<std::string>& wrt, NodeId root);

// Vector-Jacobian product for a root of any shape.
Gradients vjp(const ExprGraph& graph, const Bindings& bindings, const std::set<std::string>& wrt, NodeId root,
              const Tensor& upstream);

}  // namespace qadb
