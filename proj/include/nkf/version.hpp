#pragma once

namespace nkf {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nkf
