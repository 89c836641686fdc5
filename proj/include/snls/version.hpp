#pragma once

namespace snls {

inline constexpr const char* version = "0.1.0";

} // namespace snls
