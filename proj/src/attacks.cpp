#include "qadb/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "qadb/ops.hpp"

namespace qadb {

namespace {

void check_inputs(const Classifier& model, const Tensor& x, const std::vector<int>& y) {
  if (x.rank() < 1 || x.dim(0) != static_cast<Index>(y.size())) {
    throw ShapeError("attack input " + shape_str(x.dims()) + " does not match " + std::to_string(y.size()) +
                     " labels");
  }
  for (int l : y) {
    if (l < 0 || l >= model.n_classes()) throw ValidationError("attack label " + std::to_string(l) + " out of range");
  }
}

Tensor sign_of(const Tensor& g) {
  Tensor s(g.dims());
  s.data() = g.data().unaryExpr([](double v) { return static_cast<double>((v > 0) - (v < 0)); });
  return s;
}

// x + step * sign, then clamp into ball(anchor, eps) and [0,1]. Coordinates
// where rounding leaves |out - anchor| a ulp above eps are nudged inward so
// the budget holds exactly in floating point.
Tensor step_and_project(const Tensor& x, const Tensor& direction, double step, const Tensor& anchor, double eps) {
  Tensor out(x.dims());
  out.data() = (x.data().array() + step * direction.data().array())
                   .max(anchor.data().array() - eps)
                   .min(anchor.data().array() + eps)
                   .max(0.0)
                   .min(1.0)
                   .matrix();
  for (Index i = 0; i < out.size(); ++i) {
    while (std::abs(out[i] - anchor[i]) > eps) out[i] = std::nextafter(out[i], anchor[i]);
  }
  return out;
}

void check_anchor(const Tensor& x, const Tensor& anchor) {
  if (!x.same_shape(anchor)) {
    throw ShapeError("attack anchor " + shape_str(anchor.dims()) + " does not match input " + shape_str(x.dims()));
  }
}

}  // namespace

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::pgd: return "pgd";
    case AttackKind::cw: return "cw";
  }
  return "?";
}

AttackKind parse_attack_kind(const std::string& text) {
  if (text == "fgsm") return AttackKind::fgsm;
  if (text == "pgd") return AttackKind::pgd;
  if (text == "cw") return AttackKind::cw;
  throw ValidationError("unknown attack kind '" + text + "' (expected fgsm, pgd or cw)");
}

AttackSpec AttackSpec::fgsm(double epsilon) {
  AttackSpec s;
  s.kind = AttackKind::fgsm;
  s.epsilon = epsilon;
  return s;
}

AttackSpec AttackSpec::pgd(double epsilon, double alpha, Index steps, bool random_start, std::uint64_t seed) {
  AttackSpec s;
  s.kind = AttackKind::pgd;
  s.epsilon = epsilon;
  s.alpha = alpha;
  s.steps = steps;
  s.random_start = random_start;
  s.seed = seed;
  return s;
}

AttackSpec AttackSpec::cw(double c, double kappa, double lr, Index steps) {
  AttackSpec s;
  s.kind = AttackKind::cw;
  s.c = c;
  s.kappa = kappa;
  s.lr = lr;
  s.steps = steps;
  return s;
}

void AttackSpec::validate() const {
  if (!(epsilon >= 0)) throw ValidationError("attack epsilon must be >= 0");
  if (steps < 0) throw ValidationError("attack steps must be >= 0");
  if (kind == AttackKind::pgd && !(alpha > 0)) throw ValidationError("pgd alpha must be > 0");
  if (kind == AttackKind::cw) {
    if (!(c >= 0)) throw ValidationError("cw c must be >= 0");
    if (!(kappa >= 0)) throw ValidationError("cw kappa must be >= 0");
    if (!(lr > 0)) throw ValidationError("cw lr must be > 0");
  }
}

void AttackChain::validate() const {
  if (attacks.empty()) throw ValidationError("attack chain '" + name + "' is empty");
  for (const auto& a : attacks) a.validate();
}

Tensor loss_input_gradient(const Classifier& model, const Tensor& x, const std::vector<int>& y) {
  check_inputs(model, x, y);
  const Index k = model.n_classes();
  const double scale = 1.0 / static_cast<double>(std::max<Index>(x.dim(0), 1));
  return model.input_gradient(x, [&](Index first, const Tensor& z) {
    const Index rows = z.dim(0);
    Tensor upstream = ops::log_softmax(z);
    auto U = upstream.matrix(rows, k);
    U = U.array().exp();
    for (Index i = 0; i < rows; ++i) U(i, y[static_cast<std::size_t>(first + i)]) -= 1.0;
    U *= scale;
    return upstream;
  });
}

Tensor fgsm(const Classifier& model, const Tensor& x, const std::vector<int>& y, double eps) {
  return fgsm(model, x, y, eps, x);
}

Tensor fgsm(const Classifier& model, const Tensor& x, const std::vector<int>& y, double eps, const Tensor& anchor) {
  if (!(eps >= 0)) throw ValidationError("fgsm epsilon must be >= 0");
  check_anchor(x, anchor);
  if (eps == 0) return x;
  return step_and_project(x, sign_of(loss_input_gradient(model, x, y)), eps, anchor, eps);
}

Tensor pgd(const Classifier& model, const Tensor& x, const std::vector<int>& y, const AttackSpec& spec,
           const IterateObserver& observer) {
  return pgd(model, x, y, spec, x, observer);
}

Tensor pgd(const Classifier& model, const Tensor& x, const std::vector<int>& y, const AttackSpec& spec,
           const Tensor& anchor, const IterateObserver& observer) {
  spec.validate();
  check_inputs(model, x, y);
  check_anchor(x, anchor);
  const double eps = spec.epsilon;
  if (eps == 0) return x;
  Tensor cur = x;
  if (spec.random_start) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(-eps, eps);
    Tensor noise(x.dims());
    for (Index i = 0; i < noise.size(); ++i) noise[i] = u(rng);
    cur = step_and_project(x, noise, 1.0, anchor, eps);
  } else {
    cur = step_and_project(x, Tensor(x.dims()), 0.0, anchor, eps);
  }
  if (observer) observer(0, cur);
  for (Index step = 1; step <= spec.steps; ++step) {
    cur = step_and_project(cur, sign_of(loss_input_gradient(model, cur, y)), spec.alpha, anchor, eps);
    if (observer) observer(step, cur);
  }
  return cur;
}

Tensor cw_l2(const Classifier& model, const Tensor& x, const std::vector<int>& y, const AttackSpec& spec) {
  spec.validate();
  check_inputs(model, x, y);
  if (spec.steps == 0) return x;
  const Index n = x.dim(0), k = model.n_classes();
  if (spec.target && (*spec.target < 0 || *spec.target >= k)) throw ValidationError("cw target class out of range");
  const Index d = n == 0 ? 0 : x.size() / n;
  using Array = Eigen::ArrayXd;

  constexpr double kEdge = 1.0 - 1e-12;
  Array w = (2.0 * x.data().array() - 1.0).cwiseMax(-kEdge).cwiseMin(kEdge).atanh();
  Array m = Array::Zero(w.size()), v = Array::Zero(w.size());
  constexpr double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

  Tensor best = x;
  std::vector<double> best_obj(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Tensor cur(x.dims());
  Array delta;

  // Records the objective of rows [first, first + rows) of `cur` and returns
  // the gradient of c * f with respect to their logits.
  auto score = [&](Index first, const Tensor& z) {
    const Index rows = z.dim(0);
    const auto Z = z.matrix(rows, k);
    Tensor upstream({rows, k});
    auto U = upstream.matrix(rows, k);
    for (Index r = 0; r < rows; ++r) {
      const Index i = first + r;
      const int label = y[static_cast<std::size_t>(i)];
      // `pos` is pushed down relative to `neg`.
      Index pos, neg;
      if (spec.target) {
        neg = *spec.target;
        pos = -1;
        for (Index j = 0; j < k; ++j) {
          if (j != neg && (pos < 0 || Z(r, j) > Z(r, pos))) pos = j;
        }
      } else {
        pos = label;
        neg = -1;
        for (Index j = 0; j < k; ++j) {
          if (j != pos && (neg < 0 || Z(r, j) > Z(r, neg))) neg = j;
        }
      }
      const double margin = Z(r, pos) - Z(r, neg);
      const double f = std::max(margin, -spec.kappa);
      const double obj = delta.segment(i * d, d).square().sum() + spec.c * f;
      if (obj < best_obj[static_cast<std::size_t>(i)]) {
        best_obj[static_cast<std::size_t>(i)] = obj;
        best.data().segment(i * d, d) = cur.data().segment(i * d, d);
      }
      if (margin > -spec.kappa) {
        U(r, pos) = spec.c;
        U(r, neg) = -spec.c;
      }
    }
    return upstream;
  };

  for (Index it = 0;; ++it) {
    const Array t = w.tanh();
    cur.data() = (t + 1.0) / 2.0;
    delta = cur.data().array() - x.data().array();
    if (it == spec.steps) {
      score(0, model.logits(cur));
      break;
    }
    Array grad = 2.0 * delta + model.input_gradient(cur, score).data().array();
    grad *= (1.0 - t.square()) / 2.0;
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad.square();
    const double bc1 = 1 - std::pow(b1, static_cast<double>(it + 1));
    const double bc2 = 1 - std::pow(b2, static_cast<double>(it + 1));
    w -= spec.lr * (m / bc1) / ((v / bc2).sqrt() + adam_eps);
  }
  return best;
}

Tensor run_chain(const AttackChain& chain, const Classifier& model, const Tensor& x, const std::vector<int>& y) {
  chain.validate();
  check_inputs(model, x, y);
  Tensor cur = x;
  for (const auto& spec : chain.attacks) {
    switch (spec.kind) {
      case AttackKind::fgsm: cur = fgsm(model, cur, y, spec.epsilon, x); break;
      case AttackKind::pgd: cur = pgd(model, cur, y, spec, x); break;
      case AttackKind::cw: cur = cw_l2(model, cur, y, spec); break;
    }
  }
  cur.data() = cur.data().cwiseMax(0.0).cwiseMin(1.0);
  return cur;
}

Dataset attack_dataset(const AttackChain& chain, const Classifier& model, const Dataset& data, Index block) {
  if (data.empty()) throw ValidationError("cannot attack an empty dataset");
  if (block < 1) throw ValidationError("attack block size must be >= 1");
  std::vector<Tensor> parts;
  for (Index start = 0, b = 0; start < data.size(); start += block, ++b) {
    const Index end = std::min(start + block, data.size());
    AttackChain local = chain;
    for (auto& a : local.attacks) a.seed += static_cast<std::uint64_t>(b) * 0x9E3779B97F4A7C15ULL;
    const Dataset part = data.slice(start, end);
    parts.push_back(run_chain(local, model, part.images, part.labels));
  }
  return Dataset{concat_rows(parts), data.labels};
}

}  // namespace qadb
