//===- test_pipeline.cc - Pass pipeline tests -----------------------------===//
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

using namespace tcmc;

namespace {

KernelProgram shipped(const std::string &name, std::vector<int64_t> shape) {
  LowerOptions lo;
  lo.shape = std::move(shape);
  return lowerToGenerics(
      parseKernelFile(TCMC_SOURCE_DIR "/kernels/" + name + ".tk"), lo);
}

PipelineSpec withPasses(const std::string &list) {
  PipelineSpec spec;
  spec.passes = parsePassList(list);
  return spec;
}

std::string names(const std::vector<Stage> &stages) {
  std::string s;
  for (const Stage &st : stages)
    s += (s.empty() ? "" : " ") + st.name;
  return s;
}

} // namespace

TEST_CASE("pass lists parse and print") {
  CHECK(passListStr(defaultPasses()) == "fuse,tile,vectorize,mt,async,db");
  CHECK(parsePassList("tile,db") ==
        std::vector<PassKind>{PassKind::kTile, PassKind::kDb});
  CHECK(parsePassList("").empty());
  CHECK_THROWS_AS(parsePassList("tile,unroll"), std::invalid_argument);
}

TEST_CASE("dependency and order rules") {
  CHECK_NOTHROW(checkPipeline(PipelineSpec{}));
  CHECK_NOTHROW(checkPipeline(withPasses("math-approx,fuse")));
  CHECK_THROWS_WITH_AS(checkPipeline(withPasses("db")), "db requires tile",
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(checkPipeline(withPasses("tile,async")),
                       "async requires mt", std::invalid_argument);
  CHECK_THROWS_WITH_AS(checkPipeline(withPasses("mt,tile")), "mt requires tile",
                       std::invalid_argument);
  CHECK_THROWS_AS(checkPipeline(withPasses("tile,fuse")),
                  std::invalid_argument);
  CHECK_THROWS_AS(checkPipeline(withPasses("tile,db,mt")),
                  std::invalid_argument);
  CHECK_THROWS_AS(checkPipeline(withPasses("fuse,fuse")),
                  std::invalid_argument);
}

TEST_CASE("the full pipeline names every stage") {
  PipelineSpec spec;
  spec.tiling.sizes = {1024};
  spec.heuristic.min_domain_points = 1;
  std::vector<Stage> stages = runPipeline(shipped("gelu", {4096}), spec);
  CHECK(names(stages) == "frontend fuse tile vectorize mt async db-s1 db-s2");
  for (const Stage &st : stages) {
    if (st.name != "frontend")
      CHECK(st.program.stage == st.name);
    CHECK_MESSAGE(verify(st.program).ok(), st.name);
  }
}

TEST_CASE("the structural stage can end double buffering") {
  PipelineSpec spec = withPasses("tile,db");
  spec.tiling.sizes = {1024};
  spec.db_stage1_only = true;
  CHECK(names(runPipeline(shipped("gelu", {4096}), spec)) ==
        "frontend tile db-s1");
}

TEST_CASE("every prefix of the exact pipeline is bit-exact") {
  for (const char *k :
       {"softmax", "gelu", "silu", "rmsnorm", "vecadd2d", "expseries"}) {
    KernelProgram p = shipped(k, {24, 70});
    PipelineSpec spec;
    spec.tiling.sizes = {8};
    spec.heuristic.min_domain_points = 1;
    std::vector<Stage> stages = runPipeline(p, spec);
    TensorMap in = oracle::randomInputs(p, 11);
    TensorMap ref = interpret(p, in);
    for (const Stage &st : stages) {
      CompareReport r =
          compareOutputs(ref, interpret(st.program, in), CompareMode::exact());
      CHECK_MESSAGE(r.ok, k << " at " << st.name << ": " << r.str());
    }
  }
}

TEST_CASE("math approximation changes results only within tolerance") {
  KernelProgram p = shipped("softmax", {8, 64});
  PipelineSpec spec = withPasses("math-approx,fuse,tile");
  spec.tiling.sizes = {4};
  std::vector<Stage> stages = runPipeline(p, spec);
  TensorMap in = oracle::randomInputs(p, 2);
  TensorMap ref = interpret(p, in);
  TensorMap got = interpret(stages.back().program, in);
  CHECK_FALSE(compareOutputs(ref, got, CompareMode::exact()).ok);
  CHECK(compareOutputs(ref, got, CompareMode::reltol(1e-4)).ok);
}
