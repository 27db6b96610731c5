#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qadb/classifier.hpp"
#include "qadb/data.hpp"
#include "qadb/tensor.hpp"

namespace qadb {

enum class AttackKind { fgsm, pgd, cw };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& text);

// One gradient attack. Fields that do not apply to `kind` are kept but
// ignored. epsilon is an L-infinity budget in pixel units.
struct AttackSpec {
  AttackKind kind = AttackKind::fgsm;
  double epsilon = 0.2;
  double alpha = 0.02;
  Index steps = 40;
  bool random_start = true;
  double c = 1.0;
  double kappa = 0.0;
  double lr = 0.01;
  std::optional<int> target;  // CW only; unset = untargeted
  std::uint64_t seed = 0;

  static AttackSpec fgsm(double epsilon = 0.2);
  static AttackSpec pgd(double epsilon = 0.2, double alpha = 0.02, Index steps = 40, bool random_start = true,
                        std::uint64_t seed = 0);
  static AttackSpec cw(double c = 1.0, double kappa = 0.0, double lr = 0.01, Index steps = 100);

  void validate() const;
};

struct AttackChain {
  std::string name;
  std::vector<AttackSpec> attacks;

  void validate() const;
};

// Gradient of the mean NLL of log_softmax(logits) with respect to x.
Tensor loss_input_gradient(const Classifier& model, const Tensor& x, const std::vector<int>& y);

// clip01(x + eps * sign(grad)), sign(0) = 0.
Tensor fgsm(const Classifier& model, const Tensor& x, const std::vector<int>& y, double eps);
// As above, then projected onto the eps-ball around `anchor`.
Tensor fgsm(const Classifier& model, const Tensor& x, const std::vector<int>& y, double eps, const Tensor& anchor);

using IterateObserver = std::function<void(Index step, const Tensor& iterate)>;

// Sign-gradient ascent projected onto ball(anchor, eps) intersected with
// [0,1]^d. The anchor defaults to x.
Tensor pgd(const Classifier& model, const Tensor& x, const std::vector<int>& y, const AttackSpec& spec,
           const IterateObserver& observer = {});
Tensor pgd(const Classifier& model, const Tensor& x, const std::vector<int>& y, const AttackSpec& spec,
           const Tensor& anchor, const IterateObserver& observer = {});

// Carlini-Wagner L2 with a single constant c: minimizes
//   ||x' - x||^2 + c * max(z_y - max_{j != y} z_j, -kappa)
// over x' = (tanh(w) + 1) / 2 with Adam steps of size lr on w. The iterate
// with the lowest objective is returned per sample. With spec.target set the
// margin becomes max_{j != t} z_j - z_t.
Tensor cw_l2(const Classifier& model, const Tensor& x, const std::vector<int>& y, const AttackSpec& spec);

// Runs the attacks in order, each starting from its predecessor's output.
// Epsilon-bounded attacks stay within their budget around the original x.
Tensor run_chain(const AttackChain& chain, const Classifier& model, const Tensor& x, const std::vector<int>& y);

// run_chain over a dataset in fixed-size blocks; block b uses seeds offset
// by b. Labels are preserved.
Dataset attack_dataset(const AttackChain& chain, const Classifier& model, const Dataset& data, Index block = 1024);

}  // namespace qadb
