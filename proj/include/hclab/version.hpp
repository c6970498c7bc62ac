#pragma once

namespace hclab {

inline constexpr const char* kToolVersion = "hclab 0.1.0";

}  // namespace hclab
