#ifndef MPSE_CSV_HPP
#define MPSE_CSV_HPP

#include <charconv>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mpse {

/// Shortest decimal that round-trips to the same double; keeps CSV
/// goldens byte-stable across runs.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write CSV file: " + path);
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace mpse

#endif  // MPSE_CSV_HPP
