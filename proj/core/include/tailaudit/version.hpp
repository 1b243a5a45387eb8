#pragma once

namespace tailaudit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tailaudit
