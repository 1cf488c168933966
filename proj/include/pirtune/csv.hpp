#pragma once

#include <charconv>
#include <string>

namespace pirtune {

// Shortest round-trip decimal formatting for CSV cells, locale independent.
inline std::string csv_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace pirtune
