//===- mathlib.cc - Fast transcendental approximations --------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/mathlib.h"

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace tcmc::math {

namespace {

// ln 2 split so that n * kLn2Hi is exact for |n| < 2^11.
constexpr float kLn2Hi = 0.693145751953125f;
constexpr float kLn2Lo = 1.428606765330187e-06f;
constexpr float kInvLn2 = 1.44269504088896341f;

// Largest x with finite expf(x), and the point below which it is 0.
constexpr float kExpOverflow = 88.72283905206835f;
constexpr float kExpUnderflow = -103.972084f;

constexpr int kMaxExpDegree = 12;
constexpr float kInvFactorial[kMaxExpDegree + 1] = {
    1.0f,
    1.0f,
    1.0f / 2.0f,
    1.0f / 6.0f,
    1.0f / 24.0f,
    1.0f / 120.0f,
    1.0f / 720.0f,
    1.0f / 5040.0f,
    1.0f / 40320.0f,
    1.0f / 362880.0f,
    1.0f / 3628800.0f,
    1.0f / 39916800.0f,
    1.0f / 479001600.0f,
};

/// 2^n for n in the normal exponent range [-126, 127].
float pow2(int n) {
  return std::bit_cast<float>(static_cast<uint32_t>(n + 127) << 23);
}

float scaleByPow2(float v, int n) {
  // Split so each factor stays a normal float even for subnormal results.
  int half = n / 2;
  return v * pow2(half) * pow2(n - half);
}

} // namespace

float expApprox(float x, int degree) {
  if (degree < 2 || degree > kMaxExpDegree)
    throw std::invalid_argument("exp_approx degree must be in [2, 12]");
  if (std::isnan(x))
    return x;
  if (x > kExpOverflow)
    return std::numeric_limits<float>::infinity();
  if (x < kExpUnderflow)
    return 0.0f;

  float n = std::nearbyint(x * kInvLn2);
  float r = (x - n * kLn2Hi) - n * kLn2Lo;

  // Horner over 1/k!, k = degree..0.
  float p = kInvFactorial[degree];
  for (int k = degree - 1; k >= 0; --k)
    p = p * r + kInvFactorial[k];
  return scaleByPow2(p, static_cast<int>(n));
}

float invSqrtFastUnchecked(float x, int iterations) {
  if (!(x > 0.0f)) {
    if (x == 0.0f)
      return std::copysign(std::numeric_limits<float>::infinity(), x);
    return std::numeric_limits<float>::quiet_NaN();
  }
  if (std::isinf(x))
    return 0.0f;
  uint32_t bits = std::bit_cast<uint32_t>(x);
  float y = std::bit_cast<float>(0x5f3759dfu - (bits >> 1));
  const float half_x = 0.5f * x;
  for (int i = 0; i < iterations; ++i)
    y = y * (1.5f - half_x * y * y);
  return y;
}

float invSqrtFast(float x, int iterations) {
  if (iterations != 1 && iterations != 2)
    throw std::invalid_argument("inv_sqrt_fast supports 1 or 2 iterations");
  if (!(x > 0.0f))
    throw std::domain_error("inv_sqrt_fast requires x > 0");
  return invSqrtFastUnchecked(x, iterations);
}

float tanhApprox(float x, int degree) {
  if (std::isnan(x))
    return x;
  float ax = std::fabs(x);
  if (ax > 10.0f)
    return std::copysign(1.0f, x);
  if (ax < 0.4f) {
    // x - x^3/3 + 2x^5/15 - 17x^7/315 + 62x^9/2835
    float x2 = x * x;
    float p = 62.0f / 2835.0f;
    p = p * x2 - 17.0f / 315.0f;
    p = p * x2 + 2.0f / 15.0f;
    p = p * x2 - 1.0f / 3.0f;
    p = p * x2 + 1.0f;
    return x * p;
  }
  float e = expApprox(2.0f * ax, degree);
  float t = 1.0f - 2.0f / (e + 1.0f);
  return std::copysign(t, x);
}

} // namespace tcmc::math
