//===- math_expand.cc - Approximated transcendental payloads --------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/math_expand.h"

#include <stdexcept>

namespace tcmc {

ApproxPolicy parseMathMode(const std::string &text) {
  if (text == "exact")
    return {};
  if (text == "approx")
    return ApproxPolicy::approx();
  throw std::invalid_argument("math mode must be exact or approx");
}

KernelProgram expandMathOps(const KernelProgram &in,
                            const ApproxPolicy &policy) {
  if (policy.exp_degree < 2 || policy.exp_degree > 12)
    throw PassError("exp degree must be in [2, 12]");
  if (policy.newton_iterations != 1 && policy.newton_iterations != 2)
    throw PassError("newton iterations must be 1 or 2");
  KernelProgram p = in;
  if (policy.mode == ApproxPolicy::Mode::kExact)
    return p;

  auto rewrite = [&](const Payload &n) -> Payload {
    if (n.children().size() != 1)
      return n;
    const Payload &x = n.children()[0];
    switch (n.op()) {
    case PayloadOp::kExp:
      return policy.exp
                 ? Payload::unary(PayloadOp::kExpApprox, x, policy.exp_degree)
                 : n;
    case PayloadOp::kTanh:
      return policy.tanh
                 ? Payload::unary(PayloadOp::kTanhApprox, x, policy.exp_degree)
                 : n;
    case PayloadOp::kRsqrt:
      return policy.rsqrt ? Payload::unary(PayloadOp::kRsqrtApprox, x,
                                           policy.newton_iterations)
                          : n;
    default:
      return n;
    }
  };
  walk(p.body, [&](Op &op) {
    if (auto *g = op.getIf<GenericOp>())
      for (Payload &pl : g->payloads)
        pl = pl.rewrite(rewrite);
  });
  p.stage = "math-approx";
  return p;
}

} // namespace tcmc
