#pragma once

#include <cmath>
#include <cstddef>

// Shared by every kernel variant. Constants here define the exact operation
// sequence the variants agree on.

namespace toxhmm::kernels::detail {

inline constexpr double kExpMin = -708.0;
inline constexpr double kLog2e = 1.4426950408889634074;
inline constexpr double kLn2Hi = 6.93145751953125e-1;
inline constexpr double kLn2Lo = 1.42860682030941723212e-6;

// Taylor coefficients 1/k!, highest order first.
inline constexpr double kExpPoly[] = {
    1.0 / 6227020800.0,  // 13!
    1.0 / 479001600.0,   // 12!
    1.0 / 39916800.0,    // 11!
    1.0 / 3628800.0,     // 10!
    1.0 / 362880.0,      // 9!
    1.0 / 40320.0,       // 8!
    1.0 / 5040.0,        // 7!
    1.0 / 720.0,         // 6!
    1.0 / 120.0,         // 5!
    1.0 / 24.0,          // 4!
    1.0 / 6.0,           // 3!
    1.0 / 2.0,           // 2!
    1.0,                 // 1!
    1.0,                 // 0!
};

// Sum of log(scale[t * stride]) for t in [0, length), left to right.
inline double sum_log(const double* scale, std::size_t stride, std::size_t length) {
  double total = 0.0;
  for (std::size_t t = 0; t < length; ++t) total += std::log(scale[t * stride]);
  return total;
}

}  // namespace toxhmm::kernels::detail
