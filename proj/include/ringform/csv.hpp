#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>

namespace ringform::csv {

/// Shortest round-trip decimal; locale independent. NaN prints as "nan".
inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename Int>
  requires std::is_integral_v<Int>
std::string num(Int v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Writes whole LF-terminated rows; a row is either fully written or absent.
class Writer {
 public:
  Writer(const std::string& path, std::string_view header) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
    out_ << header << '\n';
  }

  void row(std::initializer_list<std::string> fields) {
    std::string line;
    bool first = true;
    for (const auto& f : fields) {
      if (!first) line += ',';
      line += f;
      first = false;
    }
    line += '\n';
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    if (++pending_ >= 4096) flush();
  }

  void flush() {
    out_.flush();
    pending_ = 0;
  }

  ~Writer() { out_.flush(); }

 private:
  std::ofstream out_;
  std::size_t pending_ = 0;
};

}  // namespace ringform::csv
