#pragma once

namespace divopt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace divopt
