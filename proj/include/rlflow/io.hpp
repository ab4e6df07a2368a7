#pragma once

#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace rlflow {

/// "%.17g": enough digits to round-trip any double.
std::string format_double(double v);

/// Minimal CSV writer; numbers are written with format_double.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void row(std::span<const double> values);
  /// Leading text cell followed by numbers.
  void row(const std::string& text, std::span<const double> values);

 private:
  std::ofstream out_;
  std::string path_;
};

void write_json(const nlohmann::json& doc, const std::string& path);

/// Names "prefix0", "prefix1", ... for coordinate columns.
std::vector<std::string> numbered(const std::string& prefix, std::size_t count);

}  // namespace rlflow
