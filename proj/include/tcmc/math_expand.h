//===- math_expand.h - Approximated transcendental payloads -----*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_MATH_EXPAND_H
#define TCMC_MATH_EXPAND_H

#include "tcmc/ir.h"
#include "tcmc/mathlib.h"
#include "tcmc/pass.h"

namespace tcmc {

struct ApproxPolicy {
  enum class Mode { kExact, kApprox };
  Mode mode = Mode::kExact;
  bool exp = true;
  bool tanh = true;
  bool rsqrt = true;
  int exp_degree = math::kDefaultExpDegree;
  int newton_iterations = math::kDefaultNewtonIterations;

  static ApproxPolicy approx() {
    ApproxPolicy p;
    p.mode = Mode::kApprox;
    return p;
  }
};

/// Parses "exact" or "approx".
ApproxPolicy parseMathMode(const std::string &text);

/// Rewrites exp, tanh and rsqrt payload nodes to their approximated forms.
/// Exact mode returns the program unchanged. Throws PassError for a degree
/// outside [2, 12] or an iteration count other than 1 or 2.
KernelProgram expandMathOps(const KernelProgram &p, const ApproxPolicy &policy);

} // namespace tcmc

#endif // TCMC_MATH_EXPAND_H
