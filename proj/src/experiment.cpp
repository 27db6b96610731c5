#include "qadb/experiment.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "qadb/attacks.hpp"

namespace qadb {

namespace {

struct IdxFiles {
  const char* train_images;
  const char* train_labels;
  const char* test_images;
  const char* test_labels;
};

IdxFiles idx_files(DatasetKind kind) {
  if (kind == DatasetKind::emnist_digits) {
    return {"emnist-digits-train-images-idx3-ubyte", "emnist-digits-train-labels-idx1-ubyte",
            "emnist-digits-test-images-idx3-ubyte", "emnist-digits-test-labels-idx1-ubyte"};
  }
  return {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};
}

Dataset select(const Dataset& all, const std::vector<int>& classes, Index n, std::uint64_t seed, const char* split) {
  Dataset filtered = filter_classes(all, classes);
  if (n > filtered.size()) {
    throw ValidationError(std::string("requested ") + std::to_string(n) + " " + split + " samples but only " +
                          std::to_string(filtered.size()) + " match the selected classes");
  }
  return stratified_subsample(filtered, n, seed);
}

// Runs one procedure step, logging it first and tagging failures with its
// index.
class Steps {
 public:
  Steps(int total, const StepLogger& log) : total_(total), log_(log) {}

  template <typename F>
  auto operator()(const std::string& what, F&& f) {
    ++current_;
    if (log_) log_(current_, total_, what);
    const std::string tag = "step " + std::to_string(current_) + "/" + std::to_string(total_) + " (" + what + "): ";
    try {
      return f();
    } catch (const ValidationError& e) {
      throw ValidationError(tag + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error(tag + e.what());
    }
  }

  int count() const { return current_; }

 private:
  int total_;
  const StepLogger& log_;
  int current_ = 0;
};

HybridModel initial_model(const ExperimentConfig& config) {
  return init_hybrid_model(config.model, derive_seed(config.seed, "init"));
}

TrainConfig baseline_train(const ExperimentConfig& config) {
  TrainConfig t = config.train;
  t.seed = derive_seed(config.seed, "train");
  return t;
}

Dataset attack_test(const ExperimentConfig&, const AttackChain& chain, const HybridModel& model, const Dataset& test) {
  const HybridClassifier clf(model);
  return attack_dataset(chain, clf, test);
}

double rel(const Tensor& a, const Tensor& b) {
  const double denom = std::max(a.data().norm(), b.data().norm());
  return denom == 0 ? 0 : (a.data() - b.data()).norm() / denom;
}

}  // namespace

StepLogger stderr_step_logger() {
  return [](int step, int total, const std::string& what) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    std::cerr << "[" << std::put_time(&tm, "%F %T") << "] step " << step << "/" << total << ": " << what << "\n";
  };
}

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  config.validate();
  const int k = config.model.n_classes;
  if (config.dataset == DatasetKind::synthetic) {
    return {synthetic_digits(derive_seed(config.seed, "synthetic.train"), config.train_size, k),
            synthetic_digits(derive_seed(config.seed, "synthetic.test"), config.test_size, k)};
  }
  const auto dir = resolve_data_dir(config);
  const auto files = idx_files(config.dataset);
  const Dataset train_all = load_idx_dataset(dir / files.train_images, dir / files.train_labels);
  const Dataset test_all = load_idx_dataset(dir / files.test_images, dir / files.test_labels);
  return {select(train_all, config.classes, config.train_size, derive_seed(config.seed, "data.train"), "train"),
          select(test_all, config.classes, config.test_size, derive_seed(config.seed, "data.test"), "test")};
}

RunResult run_no_defense(const ExperimentConfig& config, const std::string& chain_name, const StepLogger& log,
                         const Baseline* baseline) {
  config.validate();
  Steps step(kNoDefenseSteps, log);
  RunResult out;
  std::optional<Baseline> own;
  if (!baseline) own.emplace();
  const Baseline& base = baseline ? *baseline : *own;
  Baseline* fresh = own ? &*own : nullptr;

  step("load dataset", [&] {
    if (fresh) fresh->data = load_experiment_data(config);
  });
  step("define quantum circuit", [&] { config.model.validate(); });
  AttackChain chain;
  HybridModel model;
  step("create model and attacks", [&] {
    chain = config.chain(chain_name);
    if (fresh) model = initial_model(config);
  });
  step("fit model", [&] {
    if (fresh) fresh->trained = train(std::move(model), fresh->data.train, baseline_train(config));
  });
  step("record loss chart", [&] { out.loss_curve = base.trained.loss_curve; });
  step("train model without defense", [&] { out.model = base.trained.model; });
  step("evaluate model", [&] {
    if (fresh) fresh->clean = evaluate_accuracy(out.model, base.data.test);
  });
  step("pre-attack accuracy", [&] {
    out.row.dataset = config.dataset_name();
    out.row.attack = chain.name;
    out.row.clean_acc = base.clean.accuracy;
    out.row.clean_loss = base.clean.mean_loss;
  });
  Dataset attacked;
  step("apply attack", [&] { attacked = attack_test(config, chain, out.model, base.data.test); });
  AccuracyResult after;
  step("evaluate attacked model", [&] { after = evaluate_accuracy(out.model, attacked); });
  step("post-attack accuracy", [&] {
    out.row.no_def_acc = after.accuracy;
    out.row.no_def_loss = after.mean_loss;
    out.row.validate();
  });
  return out;
}

RunResult run_with_defense(const ExperimentConfig& config, const std::string& chain_name, const StepLogger& log,
                           const Baseline* baseline) {
  config.validate();
  Steps step(kDefenseSteps, log);
  RunResult out;
  std::optional<Baseline> own;
  if (!baseline) own.emplace();
  const Baseline& base = baseline ? *baseline : *own;
  Baseline* fresh = own ? &*own : nullptr;

  step("define quantum circuit", [&] { config.model.validate(); });
  AttackChain chain;
  HybridModel model;
  step("create model and compounded attacks", [&] {
    chain = config.chain(chain_name);
    if (fresh) model = initial_model(config);
  });
  step("load dataset", [&] {
    if (fresh) fresh->data = load_experiment_data(config);
  });
  step("fit model", [&] {
    if (fresh) fresh->trained = train(std::move(model), fresh->data.train, baseline_train(config));
  });
  step("record loss chart", [&] { out.loss_curve = base.trained.loss_curve; });
  step("train model", [&] {
    out.model = base.trained.model;
    if (fresh) fresh->clean = evaluate_accuracy(out.model, base.data.test);
    out.row.dataset = config.dataset_name();
    out.row.attack = chain.name;
    out.row.clean_acc = base.clean.accuracy;
    out.row.clean_loss = base.clean.mean_loss;
  });
  step("apply compounded attack", [&] {
    const AccuracyResult r = evaluate_accuracy(out.model, attack_test(config, chain, out.model, base.data.test));
    out.row.no_def_acc = r.accuracy;
    out.row.no_def_loss = r.mean_loss;
  });
  Dataset adversarial;
  step("generate adversarial samples", [&] {
    adversarial = generate_adversarial_dataset(out.model, base.data.train, chain);
  });
  AugmentedDataset combined;
  step("combine clean and adversarial samples", [&] {
    combined = combine_datasets(base.data.train, adversarial);
    out.combined_size = combined.size();
  });
  step("load combined dataset", [&] {
    combined.validate();
    check_labels(combined.data, config.model.n_classes);
  });
  step("retrain model with defense", [&] {
    TrainResult r = train(out.model, combined.data, config.defense_train());
    out.defended = std::move(r.model);
    out.defense_loss_curve = std::move(r.loss_curve);
  });
  step("evaluate defended model", [&] { out.defended_clean = evaluate_accuracy(*out.defended, base.data.test); });
  step("pre-attack accuracy", [&] {
    if (!std::isfinite(out.defended_clean->mean_loss)) throw std::runtime_error("defended model loss is not finite");
  });
  Dataset attacked;
  step("apply compounded attack to defended model",
       [&] { attacked = attack_test(config, chain, *out.defended, base.data.test); });
  AccuracyResult after;
  step("evaluate attacked defended model", [&] { after = evaluate_accuracy(*out.defended, attacked); });
  step("post-attack accuracy", [&] {
    out.row.def_acc = after.accuracy;
    out.row.def_loss = after.mean_loss;
    out.row.validate();
  });
  return out;
}

std::vector<RunResult> run_table5(const ExperimentConfig& config, const StepLogger& log) {
  config.validate();
  Baseline base;
  base.data = load_experiment_data(config);
  base.trained = train(initial_model(config), base.data.train, baseline_train(config));
  base.clean = evaluate_accuracy(base.trained.model, base.data.test);
  std::vector<RunResult> runs;
  for (const auto& name : config.chains) {
    StepLogger tagged;
    if (log) {
      tagged = [&](int s, int t, const std::string& what) { log(s, t, name + ": " + what); };
    }
    runs.push_back(run_with_defense(config, name, tagged, &base));
  }
  return runs;
}

std::filesystem::path write_outputs(const std::vector<RunResult>& runs, const std::filesystem::path& out_dir,
                                    ReportFormat format, bool plot, const std::string& stem) {
  if (runs.empty()) throw ValidationError("no runs to report");
  std::filesystem::create_directories(out_dir);
  std::vector<ReportRow> rows;
  for (const auto& r : runs) rows.push_back(r.row);
  const auto report = out_dir / (stem + (format == ReportFormat::csv ? ".csv" : ".json"));
  emit_report(rows, format, report);

  auto slug = [](std::string s) {
    for (auto& ch : s) {
      if (ch == '+') ch = '_';
    }
    return s;
  };
  write_loss_curve(runs.front().loss_curve, out_dir / "loss_train.csv");
  if (plot) write_loss_curve_svg(runs.front().loss_curve, "training loss", out_dir / "loss_train.svg");
  for (const auto& r : runs) {
    if (!r.defended) continue;
    const std::string base = "loss_defense_" + slug(r.row.attack);
    write_loss_curve(r.defense_loss_curve, out_dir / (base + ".csv"));
    if (plot) write_loss_curve_svg(r.defense_loss_curve, "retraining loss (" + r.row.attack + ")", out_dir / (base + ".svg"));
  }
  return report;
}

std::vector<GradcheckEntry> gradcheck(std::uint64_t seed, Index samples, int n_qubits, double h) {
  ModelShape shape;
  shape.n_qubits = n_qubits;
  shape.n_classes = 2;
  const HybridModel model = init_hybrid_model(shape, seed);
  const Dataset data = synthetic_digits(seed + 1, samples, shape.n_classes);
  const auto& g = hybrid_graph(shape);

  Bindings b = model_bindings(model);
  b.emplace("input", data.images);
  b.emplace("labels", labels_tensor(data.labels));
  std::set<std::string> wrt;
  for (const auto& n : parameter_names()) wrt.insert(n);
  wrt.insert("input");
  const Gradients analytic = gradient(g.graph, b, wrt, g.loss);

  std::vector<GradcheckEntry> out;
  for (const auto& name : wrt) {
    Tensor& t = b.at(name);
    Tensor numeric(t.dims());
    for (Index i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      t[i] = orig + h;
      const double up = evaluate(g.graph, b, g.loss).item();
      t[i] = orig - h;
      const double down = evaluate(g.graph, b, g.loss).item();
      t[i] = orig;
      numeric[i] = (up - down) / (2 * h);
    }
    const Tensor& a = analytic.at(name);
    out.push_back({name, t.size(), rel(a, numeric), (a.data() - numeric.data()).cwiseAbs().maxCoeff()});
  }
  return out;
}

}  // namespace qadb
