#ifndef ALICE_CSV_HPP
#define ALICE_CSV_HPP

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace alice::csv {

/// Shortest representation that parses back to the same double.
inline std::string number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

inline std::string number(long long value) { return std::to_string(value); }
inline std::string number(int value) { return std::to_string(value); }
inline std::string number(unsigned long long value) { return std::to_string(value); }
inline std::string number(unsigned long value) { return std::to_string(value); }
inline std::string number(long value) { return std::to_string(value); }

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << quote(fields[i]);
  }
  out << '\n';
}

}  // namespace alice::csv

#endif
