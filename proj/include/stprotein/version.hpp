#pragma once

namespace stprotein {

inline constexpr const char* kVersion = "0.1.0";

} // namespace stprotein
