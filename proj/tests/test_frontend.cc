//===- test_frontend.cc - Parser and lowering tests -----------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "doctest.h"

#include "tcmc/frontend.h"
#include "tcmc/interpreter.h"

#include <cmath>

using namespace tcmc;

namespace {

KernelAst shipped(const std::string &name) {
  return parseKernelFile(TCMC_SOURCE_DIR "/kernels/" + name + ".tk");
}

KernelProgram lowerShape(const KernelAst &ast, std::vector<int64_t> shape) {
  LowerOptions lo;
  lo.shape = std::move(shape);
  return lowerToGenerics(ast, lo);
}

std::vector<const GenericOp *> generics(const KernelProgram &p) {
  std::vector<const GenericOp *> r;
  walk(p.body, [&](const Op &op) {
    if (auto *g = op.getIf<GenericOp>())
      r.push_back(g);
  });
  return r;
}

ParseError parseFailure(const std::string &src) {
  try {
    parseKernel(src);
  } catch (const ParseError &e) {
    return e;
  }
  FAIL("source parsed: " << src);
  return ParseError({}, "");
}

bool payloadHasConstant(const Payload &p, float v) {
  if (p.op() == PayloadOp::kConst && p.value() == v)
    return true;
  for (const Payload &c : p.children())
    if (payloadHasConstant(c, v))
      return true;
  return false;
}

} // namespace

TEST_CASE("softmax parses into five statements") {
  KernelAst ast = shipped("softmax");
  CHECK(ast.name == "softmax");
  REQUIRE(ast.stmts.size() == 5);
  CHECK(ast.stmts[0].target == "row_minus_max");
  CHECK(ast.stmts[4].kind == StmtKind::kStore);
  CHECK(ast.stmts[2].value->kind == ExprKind::kReduce);
  CHECK(ast.stmts[2].value->name == "sum");
}

TEST_CASE("rmsnorm keeps sqrt of the mean square") {
  KernelAst ast = shipped("rmsnorm");
  REQUIRE(ast.findParam("g"));
  CHECK(ast.findParam("g")->kind == ParamKind::kCol);
  const Stmt &rms = ast.stmts[2];
  CHECK(rms.target == "rms");
  CHECK(rms.value->kind == ExprKind::kCall);
  CHECK(rms.value->name == "sqrt");
}

TEST_CASE("parse errors carry a span") {
  ParseError e = parseFailure("y = x +");
  CHECK(e.span().line == 1);
  CHECK(e.span().column >= 1);

  e = parseFailure(
      "kernel k(x: in, y: out) {\n  t = exp(q);\n  store(y, t);\n}");
  CHECK(e.span().line == 2);
  CHECK(e.message().find("q") != std::string::npos);
}

TEST_CASE("semantic errors") {
  parseFailure("kernel k(x: in, y: out) { t = x; }");
  parseFailure("kernel k(x: in, y: out) { store(y, x); store(y, x); }");
  parseFailure("kernel k(x: in, y: out) { store(y, sum(x, axis=3)); }");
  parseFailure("kernel k(x: in, x: out) { store(x, x); }");
}

TEST_CASE("printed source parses back to the same AST") {
  for (const char *k :
       {"softmax", "gelu", "silu", "rmsnorm", "vecadd2d", "expseries"}) {
    KernelAst ast = shipped(k);
    CHECK(astEqual(parseKernel(printAst(ast)), ast));
  }
}

TEST_CASE("softmax lowers to two reductions and three parallel generics") {
  KernelProgram p = lowerShape(shipped("softmax"), {4, 8});
  CHECK(verify(p).ok());
  auto gs = generics(p);
  REQUIRE(gs.size() == 5);
  int reductions = 0;
  for (const GenericOp *g : gs)
    reductions += g->hasReduction();
  CHECK(reductions == 2);
  // The sub and exp statements are separate parallel generics with identity
  // maps on their shared operand.
  CHECK(gs[1]->allParallel());
  CHECK(gs[2]->allParallel());
  CHECK(gs[2]->payloads[0].count(PayloadOp::kExp) == 1);
}

TEST_CASE("single statement lowers to one identity generic") {
  KernelProgram p = lowerShape(
      parseKernel("kernel add(a: in, b: in, c: out) { store(c, a + b); }"),
      {16});
  auto gs = generics(p);
  REQUIRE(gs.size() == 1);
  for (const IndexMap &m : gs[0]->input_maps)
    CHECK(m.isIdentity(1));
  CHECK(gs[0]->output_maps[0].isIdentity(1));
}

TEST_CASE("gelu lowers to one generic with the cubic tanh form") {
  KernelProgram p = lowerShape(shipped("gelu"), {1024});
  auto gs = generics(p);
  REQUIRE(gs.size() == 1);
  CHECK(gs[0]->allParallel());
  CHECK(payloadHasConstant(gs[0]->payloads[0], 0.044715f));
  CHECK(gs[0]->payloads[0].count(PayloadOp::kTanh) == 1);
}

TEST_CASE("column parameters broadcast over rows") {
  KernelProgram p = lowerShape(shipped("rmsnorm"), {3, 5});
  const TensorDecl &g = p.tensor(*p.findTensor("g"));
  CHECK(g.shape == std::vector<int64_t>{5});
  TensorMap in;
  in["x"] = TensorValue({3, 5}, 2.0f);
  in["g"] = TensorValue({5}, {1, 2, 3, 4, 5});
  TensorValue y = interpret(p, in).at("y");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c)
      CHECK(y.data[r * 5 + c] == doctest::Approx(c + 1.0).epsilon(1e-5));
}

TEST_CASE("constants and NUM_COLS") {
  KernelAst ast = shipped("rmsnorm");
  LowerOptions lo;
  lo.shape = {2, 7};
  auto consts = kernelConstants(ast, lo);
  CHECK(consts.at("NUM_COLS") == 7.0f);
  CHECK(consts.at("EPSILON") == 0.000001f);
  lo.constants["EPSILON"] = 0.5f;
  CHECK(kernelConstants(ast, lo).at("EPSILON") == 0.5f);
}

TEST_CASE("shapes outside rank 1 and 2 are rejected") {
  KernelAst ast = shipped("gelu");
  CHECK_THROWS_AS(lowerShape(ast, {}), std::invalid_argument);
  CHECK_THROWS_AS(lowerShape(ast, {2, 2, 2}), std::invalid_argument);
}
