#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace d2q {

// Shortest round-trip decimal form; "na" for NaN. Byte-stable across runs.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "na";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

}  // namespace d2q
