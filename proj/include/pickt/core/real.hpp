#pragma once

#include <cstdint>

namespace pickt {

// The whole library is compiled once per precision. The default build uses
// 32-bit floats; the gradient-check build defines PICKT_DOUBLE.
#ifdef PICKT_DOUBLE
using Real = double;
inline constexpr bool kDoublePrecision = true;
#else
using Real = float;
inline constexpr bool kDoublePrecision = false;
#endif

using Index = std::int64_t;

}  // namespace pickt
