#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <system_error>

#include "deco/error.hpp"

namespace deco {

/// Shortest decimal string that parses back to the identical double.
inline std::string format_double(double v)
{
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw Error(ErrorCode::io, "to_chars failed");
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        throw Error(ErrorCode::parse, "not a number: '" + std::string(s) + "'");
    }
    return v;
}

} // namespace deco
