#pragma once

namespace dpfed {

inline constexpr const char* kVersion = "dpfed-0.1.0";

}  // namespace dpfed
