#pragma once

namespace tsc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tsc
