#pragma once

namespace idtsim {

inline constexpr const char* kToolName = "idtsim";
inline constexpr const char* kToolVersion = "1.0.0";

}  // namespace idtsim
