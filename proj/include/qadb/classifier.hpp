#pragma once

#include <functional>

#include "qadb/tensor.hpp"

namespace qadb {

// White-box access used by the attacks: pre-softmax scores and their
// vector-Jacobian product with respect to the input. Nothing else about the
// model is visible.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Index n_classes() const = 0;
  // x [N, ...] -> logits [N, n_classes]
  virtual Tensor logits(const Tensor& x) const = 0;
  // d(sum(upstream * logits(x)))/dx, shaped like x.
  virtual Tensor logits_vjp(const Tensor& x, const Tensor& upstream) const = 0;

  // Maps the logits of rows [first_row, first_row + n) to their upstream.
  using UpstreamFn = std::function<Tensor(Index first_row, const Tensor& logits)>;

  // logits_vjp with an upstream that depends on the logits. Implementations
  // may call `upstream` once per row block so each block's forward pass is
  // evaluated only once.
  virtual Tensor input_gradient(const Tensor& x, const UpstreamFn& upstream) const {
    return logits_vjp(x, upstream(0, logits(x)));
  }
};

}  // namespace qadb
