#pragma once

#include <charconv>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace robustlab {

// Shortest round-trip decimal form; stable across runs of the same build, so
// re-generated CSV artifacts compare byte-identical.
inline std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("fmt_double: conversion failed");
  return std::string(buf, ptr);
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : os_(path, std::ios::trunc) {
    if (!os_) throw std::runtime_error("csv: cannot open '" + path + "' for writing");
    write_row_strings(header);
  }

  void field(const std::string& s) { row_.push_back(s); }
  void field(double v) { row_.push_back(fmt_double(v)); }
  void field(int64_t v) { row_.push_back(std::to_string(v)); }
  void field(bool v) { row_.push_back(v ? "1" : "0"); }

  void end_row() {
    write_row_strings(row_);
    row_.clear();
  }

 private:
  void write_row_strings(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) os_ << ',';
      os_ << cells[i];
    }
    os_ << '\n';
  }

  std::ofstream os_;
  std::vector<std::string> row_;
};

}  // namespace robustlab
