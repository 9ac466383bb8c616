//===- test_mathlib.cc - Approximated math tests --------------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "doctest.h"

#include "tcmc/frontend.h"
#include "tcmc/interpreter.h"
#include "tcmc/math_expand.h"
#include "tcmc/mathlib.h"
#include "tcmc/oracles.h"

#include <cmath>
#include <limits>

using namespace tcmc;
using namespace tcmc::math;

namespace {

double relError(double got, double want) {
  return std::fabs(got - want) / std::fabs(want);
}

KernelProgram shipped(const std::string &name, std::vector<int64_t> shape) {
  LowerOptions lo;
  lo.shape = std::move(shape);
  return lowerToGenerics(
      parseKernelFile(TCMC_SOURCE_DIR "/kernels/" + name + ".tk"), lo);
}

} // namespace

TEST_SUITE("scalar") {
  TEST_CASE("exp is accurate across the normal range") {
    double worst = 0;
    for (int i = 0; i <= 4000; ++i) {
      float x = -80.0f + 160.0f * static_cast<float>(i) / 4000.0f;
      worst = std::max(worst, relError(expApprox(x), std::exp(double(x))));
    }
    CHECK(worst < 1e-6);
    CHECK(expApprox(0.0f) == 1.0f);
  }

  TEST_CASE("exp saturates outside the representable range") {
    CHECK(expApprox(100.0f) == std::numeric_limits<float>::infinity());
    CHECK(expApprox(-200.0f) == 0.0f);
  }

  TEST_CASE("lower degrees are less accurate") {
    double d2 = 0, d6 = 0;
    for (float x = -5.0f; x <= 5.0f; x += 0.01f) {
      d2 = std::max(d2, relError(expApprox(x, 2), std::exp(double(x))));
      d6 = std::max(d6, relError(expApprox(x, 6), std::exp(double(x))));
    }
    CHECK(d2 > d6);
    CHECK_THROWS_AS(expApprox(1.0f, 1), std::invalid_argument);
    CHECK_THROWS_AS(expApprox(1.0f, 13), std::invalid_argument);
  }

  TEST_CASE("inverse square root refines with each Newton step") {
    double one = 0, two = 0;
    for (float x = 1e-3f; x < 1e4f; x *= 1.07f) {
      double want = 1.0 / std::sqrt(double(x));
      one = std::max(one, relError(invSqrtFast(x, 1), want));
      two = std::max(two, relError(invSqrtFast(x, 2), want));
    }
    CHECK(one < 2e-3);
    CHECK(two < 1e-5);
    CHECK(two < one);
    CHECK(invSqrtFast(4.0f, 2) == doctest::Approx(0.5).epsilon(1e-5));
  }

  TEST_CASE("inverse square root argument checks") {
    CHECK_THROWS_AS(invSqrtFast(0.0f), std::domain_error);
    CHECK_THROWS_AS(invSqrtFast(-1.0f), std::domain_error);
    CHECK_THROWS_AS(invSqrtFast(1.0f, 3), std::invalid_argument);
    CHECK(std::isinf(invSqrtFastUnchecked(0.0f, 1)));
  }

  TEST_CASE("tanh is odd, accurate and saturating") {
    double worst = 0;
    for (float x = -9.0f; x <= 9.0f; x += 0.003f) {
      CHECK(tanhApprox(-x) == -tanhApprox(x));
      worst = std::max(worst, std::fabs(tanhApprox(x) - std::tanh(double(x))));
    }
    CHECK(worst < 1e-6);
    CHECK(tanhApprox(0.0f) == 0.0f);
    CHECK(tanhApprox(30.0f) == 1.0f);
    CHECK(tanhApprox(-30.0f) == -1.0f);
  }
}

TEST_SUITE("expansion") {
  TEST_CASE("mode parsing") {
    CHECK(parseMathMode("exact").mode == ApproxPolicy::Mode::kExact);
    CHECK(parseMathMode("approx").mode == ApproxPolicy::Mode::kApprox);
    CHECK_THROWS_AS(parseMathMode("fast"), std::invalid_argument);
  }

  TEST_CASE("exact mode leaves the program unchanged") {
    KernelProgram p = shipped("softmax", {4, 16});
    KernelProgram e = expandMathOps(p, ApproxPolicy{});
    CHECK(printIR(e).substr(printIR(e).find('\n')) ==
          printIR(p).substr(printIR(p).find('\n')));
  }

  TEST_CASE("approx mode rewrites transcendental nodes") {
    KernelProgram p = shipped("rmsnorm", {4, 16});
    KernelProgram e =
        expandMathOps(shipped("gelu", {64}), ApproxPolicy::approx());
    const GenericOp &g = e.body.front().as<GenericOp>();
    CHECK(g.payloads[0].count(PayloadOp::kTanh) == 0);
    CHECK(g.payloads[0].count(PayloadOp::kTanhApprox) == 1);
    // sqrt is not approximated.
    KernelProgram r = expandMathOps(p, ApproxPolicy::approx());
    CHECK(printIR(r).find("sqrt(") != std::string::npos);
  }

  TEST_CASE("individual functions can be kept exact") {
    ApproxPolicy policy = ApproxPolicy::approx();
    policy.exp = false;
    KernelProgram e = expandMathOps(shipped("silu", {64}), policy);
    CHECK(e.body.front().as<GenericOp>().payloads[0].count(PayloadOp::kExp) ==
          1);
  }

  TEST_CASE("invalid parameters") {
    KernelProgram p = shipped("gelu", {8});
    ApproxPolicy policy = ApproxPolicy::approx();
    policy.exp_degree = 20;
    CHECK_THROWS_AS(expandMathOps(p, policy), PassError);
    policy = ApproxPolicy::approx();
    policy.newton_iterations = 0;
    CHECK_THROWS_AS(expandMathOps(p, policy), PassError);
  }

  TEST_CASE("approximated kernels stay close to exact ones") {
    for (const char *k : {"softmax", "gelu", "silu", "rmsnorm"}) {
      KernelProgram p = shipped(k, {16, 64});
      KernelProgram e = expandMathOps(p, ApproxPolicy::approx());
      TensorMap in = oracle::randomInputs(p, 5);
      CompareReport r = compareOutputs(interpret(p, in), interpret(e, in),
                                       CompareMode::reltol(1e-4));
      CHECK_MESSAGE(r.ok, k << ": " << r.str());
    }
  }
}
