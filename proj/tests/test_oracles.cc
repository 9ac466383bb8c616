//===- test_oracles.cc - Oracle and fixture tests -------------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "doctest.h"

#include "tcmc/frontend.h"
#include "tcmc/interpreter.h"
#include "tcmc/oracles.h"
#include "tcmc/pipeline.h"

#include <filesystem>

using namespace tcmc;
namespace fs = std::filesystem;

namespace {

const char *const kKernels[] = {"softmax", "gelu",     "silu",
                                "rmsnorm", "vecadd2d", "expseries"};

TensorMap readDir(const fs::path &dir) {
  TensorMap m;
  for (const auto &entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".bin") {
      fs::path stem = entry.path();
      stem.replace_extension();
      m[stem.filename().string()] = readTensor(stem.string());
    }
  return m;
}

KernelProgram shipped(const std::string &name, std::vector<int64_t> shape) {
  LowerOptions lo;
  lo.shape = std::move(shape);
  return lowerToGenerics(
      parseKernelFile(TCMC_SOURCE_DIR "/kernels/" + name + ".tk"), lo);
}

TensorMap single(const std::string &name, std::vector<float> v) {
  TensorMap m;
  int64_t n = static_cast<int64_t>(v.size());
  m[name] = TensorValue({n}, std::move(v));
  return m;
}

} // namespace

TEST_SUITE("formula oracles") {
  TEST_CASE("softmax of 1, 2, 3") {
    TensorValue y =
        oracle::oracleEval("softmax", single("x", {1, 2, 3})).at("y");
    CHECK(y.data[0] == doctest::Approx(0.09003057).epsilon(1e-7));
    CHECK(y.data[1] == doctest::Approx(0.24472847).epsilon(1e-7));
    CHECK(y.data[2] == doctest::Approx(0.66524096).epsilon(1e-7));
  }

  TEST_CASE("gelu and silu at zero") {
    for (const char *k : {"gelu", "silu"})
      CHECK(oracle::oracleEval(k, single("x", {0})).at("y").data[0] == 0.0f);
  }

  TEST_CASE("rmsnorm of 3, 4 without epsilon") {
    TensorMap in;
    in["x"] = TensorValue({1, 2}, {3, 4});
    in["g"] = TensorValue({2}, {1, 1});
    oracle::OracleOptions opts;
    opts.epsilon = 0;
    TensorValue y = oracle::oracleEval("rmsnorm", in, opts).at("y");
    CHECK(y.data[0] == doctest::Approx(0.84852815).epsilon(1e-7));
    CHECK(y.data[1] == doctest::Approx(1.13137085).epsilon(1e-7));
  }

  TEST_CASE("unknown kernels and missing inputs") {
    CHECK_THROWS_AS(oracle::oracleEval("relu", single("x", {0})),
                    std::invalid_argument);
    CHECK_THROWS_AS(oracle::oracleEval("vecadd2d", single("a", {0})),
                    std::invalid_argument);
  }
}

TEST_SUITE("fixtures") {
  TEST_CASE("committed outputs match the pipeline and the oracle") {
    for (const char *k : kKernels) {
      fs::path dir = fs::path(TCMC_SOURCE_DIR) / "fixtures" / k;
      TensorMap in = readDir(dir / "inputs");
      TensorMap expected = readDir(dir / "expected");
      KernelProgram p = shipped(k, {16, 33});
      PipelineSpec spec;
      spec.tiling.sizes = {4};
      spec.heuristic.min_domain_points = 1;
      TensorMap got = interpret(runPipeline(p, spec).back().program, in);
      CompareReport exact = compareOutputs(expected, got, CompareMode::exact());
      CHECK_MESSAGE(exact.ok, k << ": " << exact.str());
      CompareReport close = compareOutputs(expected, oracle::oracleEval(k, in),
                                           CompareMode::reltol(1e-5));
      CHECK_MESSAGE(close.ok, k << ": " << close.str());
    }
  }
}

TEST_SUITE("ast evaluator") {
  TEST_CASE("agrees bit for bit with the lowered program") {
    for (const char *k : kKernels) {
      KernelAst ast =
          parseKernelFile(TCMC_SOURCE_DIR "/kernels/" + std::string(k) + ".tk");
      LowerOptions lo;
      lo.shape = {9, 21};
      KernelProgram p = lowerToGenerics(ast, lo);
      TensorMap in = oracle::randomInputs(p, 4);
      CompareReport r = compareOutputs(
          interpret(p, in), oracle::evalAst(ast, in, lo), CompareMode::exact());
      CHECK_MESSAGE(r.ok, k << ": " << r.str());
    }
  }
}

TEST_SUITE("random inputs and programs") {
  TEST_CASE("inputs are seeded and bounded") {
    KernelProgram p = shipped("vecadd2d", {5, 7});
    TensorMap a = oracle::randomInputs(p, 1), b = oracle::randomInputs(p, 1);
    CHECK(compareOutputs(a, b, CompareMode::exact()).ok);
    CHECK_FALSE(
        compareOutputs(a, oracle::randomInputs(p, 2), CompareMode::exact()).ok);
    for (const auto &[name, t] : oracle::randomInputs(p, 3, 2.0f, 3.0f))
      for (float v : t.data) {
        CHECK(v >= 2.0f);
        CHECK(v <= 3.0f);
      }
  }

  TEST_CASE("the generator is deterministic") {
    oracle::RandomProgramSpec spec;
    spec.seed = 42;
    spec.length = 5;
    CHECK(oracle::genRandomProgram(spec).source ==
          oracle::genRandomProgram(spec).source);
    spec.seed = 43;
    CHECK(oracle::genRandomProgram(spec).source !=
          oracle::genRandomProgram({42, 5, {}, 0.35}).source);
  }

  TEST_CASE("a single statement program is a single generic") {
    oracle::RandomProgramSpec spec;
    spec.seed = 0;
    spec.length = 1;
    oracle::RandomProgram rp = oracle::genRandomProgram(spec);
    // One computed statement and the store.
    CHECK(rp.ast.stmts.size() == 2);
    CHECK(countOps(rp.program, OpKind::kGeneric) == 1);
  }

  TEST_CASE("seed 7 with four statements reduces") {
    oracle::RandomProgramSpec spec;
    spec.seed = 7;
    spec.length = 4;
    oracle::RandomProgram rp = oracle::genRandomProgram(spec);
    CHECK(rp.source.find("sum(") != std::string::npos);
    bool reduces = false;
    walk(rp.program.body, [&](const Op &op) {
      if (auto *g = op.getIf<GenericOp>())
        reduces |= g->hasReduction();
    });
    CHECK(reduces);
  }

  TEST_CASE("generated sources parse back to the same AST") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
      oracle::RandomProgramSpec spec;
      spec.seed = seed;
      spec.length = 1 + static_cast<int>(seed % 5);
      oracle::RandomProgram rp = oracle::genRandomProgram(spec);
      CHECK(astEqual(parseKernel(rp.source), rp.ast));
      CHECK(verify(rp.program).ok());
    }
  }

  TEST_CASE("lengths outside 1 to 5 are rejected") {
    oracle::RandomProgramSpec spec;
    spec.length = 0;
    CHECK_THROWS_AS(oracle::genRandomProgram(spec), std::invalid_argument);
    spec.length = 6;
    CHECK_THROWS_AS(oracle::genRandomProgram(spec), std::invalid_argument);
  }
}
