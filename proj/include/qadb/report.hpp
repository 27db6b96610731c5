#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace qadb {

// One Table-5 row. Rows from a no-defense run leave the defense fields
// empty.
struct ReportRow {
  std::string dataset;
  std::string attack;
  double clean_acc = 0;
  double no_def_acc = 0;
  std::optional<double> def_acc;
  double clean_loss = 0;
  double no_def_loss = 0;
  std::optional<double> def_loss;

  void validate() const;
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

enum class ReportFormat { csv, json };

ReportFormat parse_report_format(const std::string& text);

inline constexpr const char* kReportHeader =
    "dataset,attack,clean_acc,no_def_attack_acc,def_attack_acc,clean_loss,no_def_attack_loss,def_attack_loss";

// Six significant digits, %g style.
std::string format_real(double v);

std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_json(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_report_csv(const std::string& text);
std::vector<ReportRow> parse_report_json(const std::string& text);

// Writes rows to `path`. Empty rows are rejected before the file is opened.
void emit_report(const std::vector<ReportRow>& rows, ReportFormat format, const std::filesystem::path& path);

// epoch,mean_loss with epochs numbered from 1.
void write_loss_curve(const std::vector<double>& curve, const std::filesystem::path& path);
std::vector<double> read_loss_curve(const std::filesystem::path& path);

// Minimal SVG line chart of a loss curve.
std::string loss_curve_svg(const std::vector<double>& curve, const std::string& title);
void write_loss_curve_svg(const std::vector<double>& curve, const std::string& title,
                          const std::filesystem::path& path);

// Whole-file helpers that throw FormatError on I/O failure.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace qadb
