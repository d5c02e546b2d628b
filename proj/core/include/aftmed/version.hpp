#pragma once

namespace aftmed {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace aftmed
