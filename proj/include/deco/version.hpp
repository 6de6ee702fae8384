#pragma once

namespace deco {

inline constexpr const char* version = "0.1.0";

} // namespace deco
