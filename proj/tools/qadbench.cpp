// qadbench: train, attack and defend the hybrid quantum-classical classifier.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qadb/checkpoint.hpp"
#include "qadb/config.hpp"
#include "qadb/experiment.hpp"
#include "qadb/report.hpp"

namespace {

struct Options {
  std::string config_path;
  std::string preset = "paper-binary";
  std::string chain = "FGSM+PGD";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  std::string input;
  bool plot = false;
};

qadb::ExperimentConfig make_config(const Options& o) {
  qadb::ExperimentConfig c = qadb::preset_config(o.preset);
  if (!o.config_path.empty()) qadb::apply_config_file(c, o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out_dir = o.out;
  c.validate();
  return c;
}

void print_rows(const std::vector<qadb::ReportRow>& rows) { std::cout << qadb::report_csv(rows); }

std::vector<qadb::ReportRow> rows_of(const std::vector<qadb::RunResult>& runs) {
  std::vector<qadb::ReportRow> rows;
  for (const auto& r : runs) rows.push_back(r.row);
  return rows;
}

int cmd_train(const Options& o) {
  const auto config = make_config(o);
  const auto log = qadb::stderr_step_logger();
  log(1, 3, "load dataset");
  const auto data = qadb::load_experiment_data(config);
  log(2, 3, "train model");
  qadb::TrainConfig tc = config.train;
  tc.seed = qadb::derive_seed(config.seed, "train");
  const auto trained =
      qadb::train(qadb::init_hybrid_model(config.model, qadb::derive_seed(config.seed, "init")), data.train, tc);
  log(3, 3, "evaluate model");
  const auto acc = qadb::evaluate_accuracy(trained.model, data.test);
  std::filesystem::create_directories(config.out_dir);
  qadb::save_checkpoint(trained.model, config.out_dir / "model.qadb");
  qadb::write_loss_curve(trained.loss_curve, config.out_dir / "loss_train.csv");
  if (o.plot) qadb::write_loss_curve_svg(trained.loss_curve, "training loss", config.out_dir / "loss_train.svg");
  std::cout << "clean_acc," << qadb::format_real(acc.accuracy) << "\nclean_loss," << qadb::format_real(acc.mean_loss)
            << "\n";
  return 0;
}

int cmd_attack(const Options& o) {
  const auto config = make_config(o);
  const auto run = qadb::run_no_defense(config, o.chain, qadb::stderr_step_logger());
  const auto path = qadb::write_outputs({run}, config.out_dir, qadb::parse_report_format(o.format), o.plot, "attack");
  print_rows({run.row});
  std::cerr << "report written to " << path.string() << "\n";
  return 0;
}

int cmd_defend(const Options& o) {
  const auto config = make_config(o);
  const auto run = qadb::run_with_defense(config, o.chain, qadb::stderr_step_logger());
  const auto path = qadb::write_outputs({run}, config.out_dir, qadb::parse_report_format(o.format), o.plot, "defend");
  qadb::save_checkpoint(*run.defended, config.out_dir / "model_defended.qadb");
  print_rows({run.row});
  std::cerr << "report written to " << path.string() << "\n";
  return 0;
}

int cmd_run_table5(const Options& o) {
  const auto config = make_config(o);
  const auto runs = qadb::run_table5(config, qadb::stderr_step_logger());
  const auto path = qadb::write_outputs(runs, config.out_dir, qadb::parse_report_format(o.format), o.plot);
  print_rows(rows_of(runs));
  std::cerr << "report written to " << path.string() << "\n";
  return 0;
}

int cmd_report(const Options& o) {
  const std::filesystem::path out = o.out.empty() ? std::filesystem::path("out") : std::filesystem::path(o.out);
  const std::filesystem::path input = o.input.empty() ? out / "table5.csv" : std::filesystem::path(o.input);
  const std::string text = qadb::read_text(input);
  const auto rows = input.extension() == ".json" ? qadb::parse_report_json(text) : qadb::parse_report_csv(text);
  const auto format = qadb::parse_report_format(o.format);
  std::cout << (format == qadb::ReportFormat::csv ? qadb::report_csv(rows) : qadb::report_json(rows));
  return 0;
}

int cmd_gradcheck(const Options& o) {
  constexpr double kTolerance = 1e-5;
  const auto entries = qadb::gradcheck(o.seed.value_or(0));
  bool ok = true;
  std::printf("%-14s %8s %12s %12s\n", "tensor", "size", "rel_error", "max_abs");
  for (const auto& e : entries) {
    std::printf("%-14s %8lld %12.3e %12.3e\n", e.name.c_str(), static_cast<long long>(e.size), e.rel_error,
                e.max_abs_error);
    ok = ok && e.rel_error < kTolerance;
  }
  std::printf("%s (tolerance %.0e)\n", ok ? "PASS" : "FAIL", kTolerance);
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid quantum-classical adversarial robustness benchmark"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key = value config file applied on top of the preset")
        ->check(CLI::ExistingFile);
    sub->add_option("--preset", o.preset, "paper-binary or desk")->capture_default_str();
    sub->add_option("--seed", o.seed, "experiment seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--format", o.format, "report format: csv or json")->capture_default_str();
    sub->add_flag("--plot", o.plot, "also write SVG loss charts");
  };

  auto* train = app.add_subcommand("train", "train on clean data and save a checkpoint");
  add_common(train);
  auto* attack = app.add_subcommand("attack", "no-defense procedure for one chain");
  add_common(attack);
  attack->add_option("--chain", o.chain, "attack chain, e.g. FGSM+PGD")->capture_default_str();
  auto* defend = app.add_subcommand("defend", "adversarial-training procedure for one chain");
  add_common(defend);
  defend->add_option("--chain", o.chain, "attack chain, e.g. FGSM+PGD")->capture_default_str();
  auto* table5 = app.add_subcommand("run-table5", "all configured chains with and without defense");
  add_common(table5);
  auto* report = app.add_subcommand("report", "re-emit an existing report");
  report->add_option("--out", o.out, "directory holding table5.csv");
  report->add_option("--input", o.input, "report file (.csv or .json)");
  report->add_option("--format", o.format, "csv or json")->capture_default_str();
  auto* grad = app.add_subcommand("gradcheck", "compare autodiff with finite differences");
  grad->add_option("--seed", o.seed, "model and data seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(o);
    if (*attack) return cmd_attack(o);
    if (*defend) return cmd_defend(o);
    if (*table5) return cmd_run_table5(o);
    if (*report) return cmd_report(o);
    if (*grad) return cmd_gradcheck(o);
  } catch (const qadb::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
