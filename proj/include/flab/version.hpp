#pragma once

namespace flab {
inline constexpr const char* kToolkitVersion = "0.1.0";
}
