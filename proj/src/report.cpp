#include "qadb/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qadb/errors.hpp"

namespace qadb {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& text, const char* field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw FormatError(std::string("report field ") + field + ": bad number '" + text + "'");
  }
}

std::optional<double> parse_optional(const std::string& text, const char* field) {
  if (text.empty()) return std::nullopt;
  return parse_real(text, field);
}

std::string optional_cell(const std::optional<double>& v) { return v ? format_real(*v) : ""; }

// Value as it appears in the report, so CSV and JSON carry the same numbers.
double rounded(double v) { return std::stod(format_real(v)); }

}  // namespace

void ReportRow::validate() const {
  auto acc = [](double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string(what) + " must lie in [0,1]");
  };
  auto loss = [](double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(std::string(what) + " must be finite and >= 0");
  };
  if (dataset.empty() || attack.empty()) throw ValidationError("report row needs dataset and attack names");
  if (dataset.find(',') != std::string::npos || attack.find(',') != std::string::npos) {
    throw ValidationError("report names must not contain commas");
  }
  if (def_acc.has_value() != def_loss.has_value()) {
    throw ValidationError("defense accuracy and loss must be both present or both absent");
  }
  acc(clean_acc, "clean_acc");
  acc(no_def_acc, "no_def_attack_acc");
  if (def_acc) acc(*def_acc, "def_attack_acc");
  loss(clean_loss, "clean_loss");
  loss(no_def_loss, "no_def_attack_loss");
  if (def_loss) loss(*def_loss, "def_attack_loss");
}

ReportFormat parse_report_format(const std::string& text) {
  if (text == "csv") return ReportFormat::csv;
  if (text == "json") return ReportFormat::json;
  throw ValidationError("unknown report format '" + text + "' (expected csv or json)");
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& r : rows) {
    r.validate();
    out += r.dataset + "," + r.attack + "," + format_real(r.clean_acc) + "," + format_real(r.no_def_acc) + "," +
           optional_cell(r.def_acc) + "," + format_real(r.clean_loss) + "," + format_real(r.no_def_loss) + "," +
           optional_cell(r.def_loss) + "\n";
  }
  return out;
}

std::string report_json(const std::vector<ReportRow>& rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    r.validate();
    nlohmann::ordered_json j;
    j["dataset"] = r.dataset;
    j["attack"] = r.attack;
    j["clean_acc"] = rounded(r.clean_acc);
    j["no_def_attack_acc"] = rounded(r.no_def_acc);
    j["def_attack_acc"] = r.def_acc ? nlohmann::ordered_json(rounded(*r.def_acc)) : nlohmann::ordered_json();
    j["clean_loss"] = rounded(r.clean_loss);
    j["no_def_attack_loss"] = rounded(r.no_def_loss);
    j["def_attack_loss"] = r.def_loss ? nlohmann::ordered_json(rounded(*r.def_loss)) : nlohmann::ordered_json();
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) throw FormatError("report CSV header mismatch");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw FormatError("report CSV row has " + std::to_string(f.size()) + " fields, expected 8");
    ReportRow r;
    r.dataset = f[0];
    r.attack = f[1];
    r.clean_acc = parse_real(f[2], "clean_acc");
    r.no_def_acc = parse_real(f[3], "no_def_attack_acc");
    r.def_acc = parse_optional(f[4], "def_attack_acc");
    r.clean_loss = parse_real(f[5], "clean_loss");
    r.no_def_loss = parse_real(f[6], "no_def_attack_loss");
    r.def_loss = parse_optional(f[7], "def_attack_loss");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ReportRow> parse_report_json(const std::string& text) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report JSON: ") + e.what());
  }
  if (!arr.is_array()) throw FormatError("report JSON must be an array");
  std::vector<ReportRow> rows;
  try {
    for (const auto& j : arr) {
      ReportRow r;
      r.dataset = j.at("dataset").get<std::string>();
      r.attack = j.at("attack").get<std::string>();
      r.clean_acc = j.at("clean_acc").get<double>();
      r.no_def_acc = j.at("no_def_attack_acc").get<double>();
      if (!j.at("def_attack_acc").is_null()) r.def_acc = j.at("def_attack_acc").get<double>();
      r.clean_loss = j.at("clean_loss").get<double>();
      r.no_def_loss = j.at("no_def_attack_loss").get<double>();
      if (!j.at("def_attack_loss").is_null()) r.def_loss = j.at("def_attack_loss").get<double>();
      rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report JSON: ") + e.what());
  }
  return rows;
}

void emit_report(const std::vector<ReportRow>& rows, ReportFormat format, const std::filesystem::path& path) {
  if (rows.empty()) throw ValidationError("refusing to write an empty report");
  const std::string text = format == ReportFormat::csv ? report_csv(rows) : report_json(rows);
  write_text(path, text);
}

void write_loss_curve(const std::vector<double>& curve, const std::filesystem::path& path) {
  std::string out = "epoch,mean_loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) out += std::to_string(i + 1) + "," + format_real(curve[i]) + "\n";
  write_text(path, out);
}

std::vector<double> read_loss_curve(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "epoch,mean_loss") throw FormatError(path.string() + ": bad loss-curve header");
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2) throw FormatError(path.string() + ": bad loss-curve row");
    out.push_back(parse_real(f[1], "mean_loss"));
  }
  return out;
}

std::string loss_curve_svg(const std::vector<double>& curve, const std::string& title) {
  constexpr double W = 480, H = 320, L = 60, R = 20, T = 40, B = 40;
  double lo = 0, hi = 1;
  if (!curve.empty()) {
    lo = *std::min_element(curve.begin(), curve.end());
    hi = *std::max_element(curve.begin(), curve.end());
  }
  if (hi - lo < 1e-12) hi = lo + 1;
  auto px = [&](std::size_t i) {
    return curve.size() < 2 ? L : L + (W - L - R) * static_cast<double>(i) / static_cast<double>(curve.size() - 1);
  };
  auto py = [&](double v) { return T + (H - T - B) * (hi - v) / (hi - lo); };
  char buf[160];
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"320\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"240\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" + title +
         "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<path d=\"M%g %g V%g H%g\" stroke=\"black\" fill=\"none\"/>\n", L, T, H - B, W - R);
  out += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"10\" text-anchor=\"end\">%s</text>\n", L - 4,
                T + 4, format_real(hi).c_str());
  out += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"10\" text-anchor=\"end\">%s</text>\n", L - 4,
                H - B, format_real(lo).c_str());
  out += buf;
  out += "<text x=\"270\" y=\"312\" font-size=\"10\" text-anchor=\"middle\">epoch</text>\n";
  if (!curve.empty()) {
    out += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < curve.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(i), py(curve[i]));
      out += buf;
    }
    out += "\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

void write_loss_curve_svg(const std::vector<double>& curve, const std::string& title,
                          const std::filesystem::path& path) {
  write_text(path, loss_curve_svg(curve, title));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace qadb
