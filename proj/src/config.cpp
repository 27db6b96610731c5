#include "qadb/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace qadb {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ValidationError("expected a number, got '" + text + "'");
  return value;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ValidationError("expected a boolean, got '" + text + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dataset", [](auto& c, const auto& v) { c.dataset = parse_dataset_kind(v); }},
      {"classes",
       [](auto& c, const auto& v) {
         c.classes.clear();
         if (!v.empty()) {
           for (const auto& item : split(v, ',')) c.classes.push_back(parse_number<int>(item));
         }
       }},
      {"train_size", [](auto& c, const auto& v) { c.train_size = parse_number<Index>(v); }},
      {"test_size", [](auto& c, const auto& v) { c.test_size = parse_number<Index>(v); }},
      {"seed", [](auto& c, const auto& v) { c.seed = parse_number<std::uint64_t>(v); }},
      {"model.n_qubits", [](auto& c, const auto& v) { c.model.n_qubits = parse_number<int>(v); }},
      {"model.n_classes", [](auto& c, const auto& v) { c.model.n_classes = parse_number<int>(v); }},
      {"model.per_qubit_angles", [](auto& c, const auto& v) { c.model.per_qubit_angles = parse_bool(v); }},
      {"train.batch_size", [](auto& c, const auto& v) { c.train.batch_size = parse_number<Index>(v); }},
      {"train.epochs", [](auto& c, const auto& v) { c.train.epochs = parse_number<Index>(v); }},
      {"train.learning_rate", [](auto& c, const auto& v) { c.train.learning_rate = parse_number<double>(v); }},
      {"train.beta1", [](auto& c, const auto& v) { c.train.beta1 = parse_number<double>(v); }},
      {"train.beta2", [](auto& c, const auto& v) { c.train.beta2 = parse_number<double>(v); }},
      {"train.epsilon", [](auto& c, const auto& v) { c.train.epsilon = parse_number<double>(v); }},
      {"defense.epochs", [](auto& c, const auto& v) { c.defense_epochs = parse_number<Index>(v); }},
      {"attack.epsilon",
       [](auto& c, const auto& v) { c.attacks.fgsm.epsilon = c.attacks.pgd.epsilon = parse_number<double>(v); }},
      {"attack.fgsm.epsilon", [](auto& c, const auto& v) { c.attacks.fgsm.epsilon = parse_number<double>(v); }},
      {"attack.pgd.epsilon", [](auto& c, const auto& v) { c.attacks.pgd.epsilon = parse_number<double>(v); }},
      {"attack.pgd.alpha", [](auto& c, const auto& v) { c.attacks.pgd.alpha = parse_number<double>(v); }},
      {"attack.pgd.steps", [](auto& c, const auto& v) { c.attacks.pgd.steps = parse_number<Index>(v); }},
      {"attack.pgd.random_start", [](auto& c, const auto& v) { c.attacks.pgd.random_start = parse_bool(v); }},
      {"attack.cw.c", [](auto& c, const auto& v) { c.attacks.cw.c = parse_number<double>(v); }},
      {"attack.cw.kappa", [](auto& c, const auto& v) { c.attacks.cw.kappa = parse_number<double>(v); }},
      {"attack.cw.lr", [](auto& c, const auto& v) { c.attacks.cw.lr = parse_number<double>(v); }},
      {"attack.cw.steps", [](auto& c, const auto& v) { c.attacks.cw.steps = parse_number<Index>(v); }},
      {"attack.cw.target",
       [](auto& c, const auto& v) {
         if (v == "none") {
           c.attacks.cw.target.reset();
         } else {
           c.attacks.cw.target = parse_number<int>(v);
         }
       }},
      {"chains", [](auto& c, const auto& v) { c.chains = split(v, ','); }},
      {"paths.data_dir", [](auto& c, const auto& v) { c.data_dir = v; }},
      {"paths.out_dir", [](auto& c, const auto& v) { c.out_dir = v; }},
  };
  return table;
}

}  // namespace

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::mnist: return "mnist";
    case DatasetKind::emnist_digits: return "emnist_digits";
    case DatasetKind::synthetic: return "synthetic";
  }
  return "?";
}

DatasetKind parse_dataset_kind(const std::string& text) {
  if (text == "mnist") return DatasetKind::mnist;
  if (text == "emnist_digits") return DatasetKind::emnist_digits;
  if (text == "synthetic") return DatasetKind::synthetic;
  throw ValidationError("unknown dataset '" + text + "' (expected mnist, emnist_digits or synthetic)");
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  if (classes.empty()) throw ValidationError("classes must not be empty");
  if (static_cast<int>(classes.size()) != model.n_classes) {
    throw ValidationError("model.n_classes = " + std::to_string(model.n_classes) + " but " +
                          std::to_string(classes.size()) + " classes are selected");
  }
  if (std::set<int>(classes.begin(), classes.end()).size() != classes.size()) {
    throw ValidationError("classes contain duplicates");
  }
  if (train_size < 1 || test_size < 1) throw ValidationError("train_size and test_size must be >= 1");
  if (defense_epochs && *defense_epochs < 0) throw ValidationError("defense.epochs must be >= 0");
  if (chains.empty()) throw ValidationError("at least one chain is required");
  std::set<std::string> seen;
  for (const auto& name : chains) {
    if (!seen.insert(name).second) throw ValidationError("duplicate chain name '" + name + "'");
    chain(name).validate();
  }
  if (attacks.cw.target && (*attacks.cw.target < 0 || *attacks.cw.target >= model.n_classes)) {
    throw ValidationError("attack.cw.target out of range");
  }
}

TrainConfig ExperimentConfig::defense_train() const {
  TrainConfig t = train;
  if (defense_epochs) t.epochs = *defense_epochs;
  t.seed = derive_seed(seed, "defense.train");
  return t;
}

AttackChain ExperimentConfig::chain(const std::string& name) const {
  AttackChain out;
  out.name = name;
  const auto parts = split(name, '+');
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string kind = upper(parts[i]);
    AttackSpec spec;
    if (kind == "FGSM") {
      spec = attacks.fgsm;
    } else if (kind == "PGD") {
      spec = attacks.pgd;
    } else if (kind == "CW") {
      spec = attacks.cw;
    } else {
      throw ValidationError("chain '" + name + "' names unknown attack '" + parts[i] + "'");
    }
    spec.seed = derive_seed(seed, "attack." + name + "." + std::to_string(i));
    out.attacks.push_back(spec);
  }
  return out;
}

std::string ExperimentConfig::dataset_name() const {
  std::string out = to_string(dataset);
  for (int c : classes) out += "-" + std::to_string(c);
  return out;
}

std::vector<std::string> preset_names() { return {"paper-binary", "desk"}; }

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  if (name == "paper-binary") return c;
  if (name == "desk") {
    c.train_size = 2000;
    c.test_size = 500;
    c.train.epochs = 3;
    return c;
  }
  throw ValidationError("unknown preset '" + name + "' (expected paper-binary or desk)");
}

void apply_config_text(ExperimentConfig& config, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ValidationError(where + "unknown key '" + key + "'");
    try {
      it->second(config, value);
    } catch (const ValidationError& e) {
      throw ValidationError(where + key + ": " + e.what());
    }
  }
}

void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  apply_config_text(config, buf.str(), path.string());
}

std::filesystem::path resolve_data_dir(const ExperimentConfig& config) {
  if (const char* env = std::getenv("QADBENCH_DATA_DIR"); env && *env) return env;
  if (!config.data_dir.empty()) return config.data_dir;
  return "data";
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag) {
  // FNV-1a over the tag, then one splitmix64 round.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : tag) h = (h ^ ch) * 0x100000001b3ULL;
  std::uint64_t z = seed + h + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace qadb
