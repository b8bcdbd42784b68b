#pragma once

// Trace CSV files: header `t_s,<unit>` then one `t,value` row per sample on a
// uniform grid. The sample rate is inferred from the first two rows and every
// row is checked against it to within 1e-6 s.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "prbm/errors.hpp"
#include "prbm/trace.hpp"

namespace prbm::io {

inline constexpr double kTimeTolerance_s = 1e-6;

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_trace_csv(std::ostream& os, const Trace& t) {
  os << "t_s," << to_string(t.unit) << '\n';
  for (std::size_t i = 0; i < t.size(); ++i)
    os << format_double(t.time(i)) << ',' << format_double(t.values[i]) << '\n';
}

inline void write_trace_csv(const std::string& path, const Trace& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError(path, "cannot open for writing");
  write_trace_csv(os, t);
  if (!os) throw FileError(path, "write failed");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Parses a trace; `name` is used in error messages. Row numbers are 1-based
/// file lines (the header is line 1).
inline Trace read_trace_csv(std::istream& is, const std::string& name) {
  std::string line;
  if (!std::getline(is, line) || detail::trim(line).empty()) throw FileError(name, "file is empty");
  std::string_view header = detail::trim(line);
  const auto comma = header.find(',');
  if (comma == std::string_view::npos || detail::trim(header.substr(0, comma)) != "t_s")
    throw FileError(name, "header must be `t_s,<unit>`", 1);
  const auto unit = parse_unit(detail::trim(header.substr(comma + 1)));
  if (!unit) throw FileError(name, "unknown unit in header", 1);

  std::vector<double> times, values;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    const std::string_view l = detail::trim(line);
    if (l.empty()) continue;
    const auto c = l.find(',');
    double t = 0.0, v = 0.0;
    if (c == std::string_view::npos || l.find(',', c + 1) != std::string_view::npos ||
        !detail::parse_double(l.substr(0, c), t) || !detail::parse_double(l.substr(c + 1), v)) {
      throw FileError(name, "expected two decimal fields", row);
    }
    times.push_back(t);
    values.push_back(v);
    if (times.size() == 2 && !(times[1] > times[0]))
      throw FileError(name, "time must be strictly increasing", row);
    if (times.size() > 2) {
      const double dt = times[1] - times[0];
      const double expected = times[0] + static_cast<double>(times.size() - 1) * dt;
      if (std::abs(t - expected) > kTimeTolerance_s)
        throw FileError(name, "time grid is not uniform", row);
    }
  }
  if (values.size() < 2) throw FileError(name, "need at least 2 samples");

  double rate = 1.0 / (times[1] - times[0]);
  if (const double r = std::round(rate); std::abs(rate - r) <= 1e-9 * r) rate = r;
  return Trace(rate, std::move(values), *unit);
}

inline Trace read_trace_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError(path, "cannot open for reading");
  return read_trace_csv(is, path);
}

/// 64-bit FNV-1a; used for input and output checksums in run manifests.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError(path, "cannot open for reading");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::string file_checksum(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

}  // namespace prbm::io
