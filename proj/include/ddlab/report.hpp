#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ddlab/metrics.hpp"

namespace ddlab {

/// Parsed CSV: header names and rows of raw fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable parse_csv_table(const std::string& text, const std::string& what);

struct ReportInputs {
  std::vector<MetricRecord> metrics;
  std::optional<PhaseAnnotation> phases;
  CsvTable similarity;
  CsvTable large_activation;
  CsvTable per_class_magnitude;
};

/// File name -> SVG document. Throws std::invalid_argument on empty or
/// inconsistent inputs, before anything is produced.
std::map<std::string, std::string> render_report(const ReportInputs& inputs);

/// The report command: reads the run directory and writes <run>/figures/*.svg.
/// Nothing is written unless every figure rendered.
void run_report(const std::filesystem::path& run_dir);

}  // namespace ddlab
