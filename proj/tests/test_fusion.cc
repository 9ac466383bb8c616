//===- test_fusion.cc - Elementwise fusion tests --------------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "doctest.h"

#include "tcmc/frontend.h"
#include "tcmc/fusion.h"
#include "tcmc/interpreter.h"
#include "tcmc/oracles.h"
#include "tcmc/tiling.h"

using namespace tcmc;

namespace {

KernelProgram lowerSource(const std::string &src, std::vector<int64_t> shape) {
  LowerOptions lo;
  lo.shape = std::move(shape);
  return lowerToGenerics(parseKernel(src), lo);
}

KernelProgram softmax(std::vector<int64_t> shape) {
  LowerOptions lo;
  lo.shape = std::move(shape);
  return lowerToGenerics(parseKernelFile(TCMC_SOURCE_DIR "/kernels/softmax.tk"),
                         lo);
}

/// Input index of top-level generic `consumer` that reads what `producer`
/// writes, or -1.
int operandOf(const KernelProgram &p, int producer, int consumer) {
  const GenericOp &prod = p.body[producer].as<GenericOp>();
  const GenericOp &cons = p.body[consumer].as<GenericOp>();
  for (size_t i = 0; i < cons.inputs.size(); ++i)
    if (cons.inputs[i].tensor == prod.outputs[0].tensor)
      return static_cast<int>(i);
  return -1;
}

void checkSameOutputs(const KernelProgram &a, const KernelProgram &b) {
  for (uint64_t seed = 0; seed < 4; ++seed) {
    TensorMap in = oracle::randomInputs(a, seed);
    CompareReport r = compareOutputs(interpret(a, in), interpret(b, in),
                                     CompareMode::exact());
    CHECK_MESSAGE(r.ok, r.str());
  }
}

} // namespace

TEST_CASE("legality on the softmax chain") {
  KernelProgram p = softmax({4, 16});
  // max, sub, exp, sum, div
  REQUIRE(p.body.size() == 5);
  auto legal = [&](int prod, int cons) {
    return fusionLegal(p, p.body[prod].id, p.body[cons].id,
                       operandOf(p, prod, cons));
  };
  CHECK(legal(1, 2) == FusionVeto::kNone);
  CHECK(legal(0, 1) == FusionVeto::kProducerHasReduction);
  CHECK(legal(3, 4) == FusionVeto::kProducerHasReduction);
  // The numerator feeds both the sum and the division.
  CHECK(legal(2, 3) == FusionVeto::kMultiUse);
  CHECK(legal(2, 4) == FusionVeto::kMultiUse);
}

TEST_CASE("an operand that does not read the producer is a map mismatch") {
  KernelProgram p = softmax({4, 16});
  CHECK(fusionLegal(p, p.body[1].id, p.body[2].id, 1) ==
        FusionVeto::kMapMismatch);
  CHECK(fusionLegal(p, p.body[1].id, p.body[1].id, 0) ==
        FusionVeto::kMapMismatch);
}

TEST_CASE("vectorized generics are not fused") {
  KernelProgram p = lowerSource(
      "kernel k(x: in, y: out) { t = x * 2.0; store(y, exp(t)); }", {64});
  KernelProgram v = vectorizeInnermost(p, 8);
  CHECK(fusionLegal(v, v.body[0].id, v.body[1].id, 0) ==
        FusionVeto::kMapMismatch);
}

TEST_CASE("elementwise producer into a reduction consumer") {
  KernelProgram p = lowerSource(
      "kernel k(x: in, y: out) { sq = x * x; store(y, sum(sq, axis=0)); }",
      {16});
  CHECK(fusionLegal(p, p.body[0].id, p.body[1].id, operandOf(p, 0, 1)) ==
        FusionVeto::kNone);
  // The reduced value is broadcast back to y by a third generic.
  CHECK(countOps(p, OpKind::kGeneric) == 3);
  KernelProgram f = fuseElementwise(p);
  CHECK(countOps(f, OpKind::kGeneric) == 2);
  const GenericOp &red = f.body[0].as<GenericOp>();
  CHECK(red.hasReduction());
  CHECK(red.payloads[0].count(PayloadOp::kMul) == 1);
  checkSameOutputs(p, f);
}

TEST_CASE("softmax fuses sub into exp") {
  KernelProgram p = softmax({8, 32});
  FusionStats stats;
  KernelProgram f = fuseElementwise(p, &stats);
  CHECK(countOps(f, OpKind::kGeneric) == 4);
  REQUIRE(stats.fired.size() == 1);
  CHECK(stats.fired[0].producer == p.body[1].id);
  CHECK(stats.fired[0].consumer == p.body[2].id);
  std::string text = printIR(f);
  CHECK(text.find("exp(sub(arg0, arg1))") != std::string::npos);
  CHECK(verify(f).ok());
  checkSameOutputs(p, f);
}

TEST_CASE("a single generic is left alone") {
  KernelProgram p =
      lowerSource("kernel k(a: in, b: in, c: out) { store(c, a + b); }", {8});
  KernelProgram f = fuseElementwise(p);
  CHECK(printIR(f).substr(printIR(f).find('\n')) ==
        printIR(p).substr(printIR(p).find('\n')));
}

TEST_CASE("a chain of three elementwise generics becomes one") {
  KernelProgram p = lowerSource("kernel k(x: in, y: out) {\n"
                                "  a = x + 1.0;\n"
                                "  b = exp(a);\n"
                                "  store(y, b * 3.0);\n"
                                "}",
                                {4, 8});
  CHECK(countOps(p, OpKind::kGeneric) == 3);
  KernelProgram f = fuseElementwise(p);
  CHECK(countOps(f, OpKind::kGeneric) == 1);
  checkSameOutputs(p, f);
  // Intermediate temporaries disappear with their producers.
  CHECK_FALSE(f.findTensor("a").has_value());
  CHECK_FALSE(f.findTensor("b").has_value());
}

TEST_CASE("broadcast operands fuse through the consumer's map") {
  KernelProgram p = lowerSource(
      "kernel k(x: in, g: col, y: out) { t = g * 2.0; store(y, x * t); }",
      {4, 8});
  KernelProgram f = fuseElementwise(p);
  CHECK(countOps(f, OpKind::kGeneric) == 1);
  checkSameOutputs(p, f);
}

TEST_CASE("fusion is deterministic") {
  KernelProgram p = softmax({3, 5});
  CHECK(printIR(fuseElementwise(p)) == printIR(fuseElementwise(p)));
}
