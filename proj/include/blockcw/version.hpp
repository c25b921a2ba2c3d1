#pragma once

namespace blockcw {
inline constexpr const char* version = "0.1.0";
}
