#pragma once

// Locale-independent number formatting for reports.

#include <array>
#include <charconv>
#include <cmath>
#include <string>
#include <system_error>

namespace citeframe {

/// Rounds half away from zero at `decimals` places. Values within 1e-9 (in
/// units of the last place) of a tie are treated as ties, so 0.485 rounds to
/// 0.49 even though its binary value sits just below.
[[nodiscard]] inline double round_half_away(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    const double scaled = value * scale;
    const double lower = std::floor(std::abs(scaled));
    const double frac = std::abs(scaled) - lower;
    double mag = lower;
    if (frac >= 0.5 - 1e-9) {
        mag += 1.0;
    }
    return std::copysign(mag, scaled) / scale;
}

/// Fixed-point with `decimals` digits, half-away rounding, '.' separator.
[[nodiscard]] inline std::string format_fixed(double value, int decimals) {
    double r = round_half_away(value, decimals);
    if (r == 0.0) {
        r = 0.0;  // no "-0.00"
    }
    std::array<char, 64> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), r, std::chars_format::fixed, decimals);
    if (ec != std::errc{}) {
        return "nan";
    }
    return std::string(buf.data(), end);
}

}  // namespace citeframe
