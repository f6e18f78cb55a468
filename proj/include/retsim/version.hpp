#pragma once

namespace retsim {

inline constexpr const char* kToolName = "retsim";
inline constexpr const char* kVersion = "0.1.0";

}  // namespace retsim
