#pragma once

namespace aoii {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace aoii
