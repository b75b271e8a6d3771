#pragma once

namespace optionlab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace optionlab
