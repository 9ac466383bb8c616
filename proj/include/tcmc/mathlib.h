//===- mathlib.h - Fast transcendental approximations -----------*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Scalar f32 approximations used by the math expansion pass:
//
//   exp:   e^x = e^r * 2^n with n = round(x / ln 2), r = x - n ln 2, the
//          reduced exponential evaluated as a Taylor polynomial in Horner
//          form and 2^n applied by building the exponent bits directly.
//   rsqrt: bit-level seed followed by Newton-Raphson refinement.
//   tanh:  odd Taylor series near zero, 1 - 2 / (e^{2|x|} + 1) elsewhere,
//          saturating to +-1 beyond |x| = 10.
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_MATHLIB_H
#define TCMC_MATHLIB_H

namespace tcmc::math {

inline constexpr int kDefaultExpDegree = 6;
inline constexpr int kDefaultNewtonIterations = 1;

/// Requires `2 <= degree <= 12`. Overflows to +inf and underflows to 0.
float expApprox(float x, int degree = kDefaultExpDegree);

/// Throws std::domain_error for x <= 0 and std::invalid_argument unless
/// `iterations` is 1 or 2.
float invSqrtFast(float x, int iterations = kDefaultNewtonIterations);

/// Payload-evaluation variant: no argument checks; x <= 0 follows 1/sqrt(x).
float invSqrtFastUnchecked(float x, int iterations);

float tanhApprox(float x, int degree = kDefaultExpDegree);

} // namespace tcmc::math

#endif // TCMC_MATHLIB_H
