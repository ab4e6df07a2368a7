#include "rlflow/io.hpp"

#include <cstdio>

#include "rlflow/errors.hpp"

namespace rlflow {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path), path_(path) {
  if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n';
}

void CsvWriter::row(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_double(values[i]);
  out_ << '\n';
  if (!out_) throw std::runtime_error("write to '" + path_ + "' failed");
}

void CsvWriter::row(const std::string& text, std::span<const double> values) {
  out_ << text;
  for (double v : values) out_ << ',' << format_double(v);
  out_ << '\n';
  if (!out_) throw std::runtime_error("write to '" + path_ + "' failed");
}

void write_json(const nlohmann::json& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << doc.dump(2) << '\n';
}

std::vector<std::string> numbered(const std::string& prefix, std::size_t count) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < count; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

}  // namespace rlflow
