#pragma once

namespace dctwa {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dctwa
