#pragma once

namespace eqm {

inline constexpr const char* kVersion = "1.0.0";

// Version tag of the .eqm model container and run manifests.
inline constexpr int kModelFileVersion = 1;

}  // namespace eqm
