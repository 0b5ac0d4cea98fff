#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "fhl/common.hpp"

namespace fhl {

/// Minimal CSV writer. Doubles are written with 17 significant digits so
/// reruns produce byte-identical files.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : os_(path) {
    if (!os_) throw FormatError("cannot open " + path.string() + " for writing");
    os_ << std::setprecision(17);
  }

  CsvWriter& header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) os_ << (i ? "," : "") << cols[i];
    os_ << '\n';
    return *this;
  }

  template <class... Ts>
  CsvWriter& row(const Ts&... fields) {
    bool first = true;
    ((os_ << (first ? "" : ",") << fields, first = false), ...);
    os_ << '\n';
    return *this;
  }

 private:
  std::ofstream os_;
};

inline std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace fhl
