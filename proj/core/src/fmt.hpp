#pragma once

#include <charconv>
#include <string>

namespace moestress::detail {

// Shortest round-trip decimal form, the same rule nlohmann::json uses for
// numbers. Keeps CSV output byte-stable without dumping 17 digits.
inline std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace moestress::detail
