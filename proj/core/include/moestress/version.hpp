#pragma once

namespace moestress {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace moestress
