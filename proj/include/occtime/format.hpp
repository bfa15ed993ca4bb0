#pragma once

#include <charconv>
#include <cmath>
#include <string>
#include <system_error>

namespace occtime {

/// Shortest decimal string that round-trips to the same double (at most 17
/// significant digits). Non-finite values print as nan / inf / -inf.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

}  // namespace occtime
