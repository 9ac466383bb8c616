//===- test_tiling.cc - Tiling and vectorization tests --------------------===//
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
#include "tcmc/pass.h"
#include "tcmc/tiling.h"

using namespace tcmc;

namespace {

KernelProgram lowerKernel(const std::string &name, std::vector<int64_t> shape) {
  LowerOptions lo;
  lo.shape = std::move(shape);
  return lowerToGenerics(
      parseKernelFile(TCMC_SOURCE_DIR "/kernels/" + name + ".tk"), lo);
}

KernelProgram tiled(const KernelProgram &p, std::vector<int64_t> sizes) {
  TilingOptions to;
  to.sizes = std::move(sizes);
  return tileProgram(p, to);
}

const ForOp &firstLoop(const KernelProgram &p) {
  for (const Op &op : p.body)
    if (auto *f = op.getIf<ForOp>())
      return *f;
  FAIL("no loop");
  return p.body.front().as<ForOp>();
}

const GenericOp &genericIn(const Block &b) {
  for (const Op &op : b)
    if (auto *g = op.getIf<GenericOp>())
      return *g;
  FAIL("no generic");
  return b.front().as<GenericOp>();
}

/// Domain extent of dimension `d` of the tiled generic at each iteration.
std::vector<int64_t> tileExtents(const KernelProgram &p, int d) {
  const ForOp &loop = firstLoop(p);
  const GenericOp &g = genericIn(loop.body);
  std::vector<int64_t> vars(p.num_vars, 0), r;
  for (int64_t i = 0; i < *loop.upper.as_constant(); ++i) {
    vars[loop.iv] = i;
    r.push_back(g.extents[d].eval(vars));
  }
  return r;
}

void checkSameOutputs(const KernelProgram &a, const KernelProgram &b) {
  TensorMap in = oracle::randomInputs(a, 9);
  CompareReport r =
      compareOutputs(interpret(a, in), interpret(b, in), CompareMode::exact());
  CHECK_MESSAGE(r.ok, r.str());
}

} // namespace

TEST_SUITE("tile") {
  TEST_CASE("GELU of 2^20 elements in tiles of 2^18") {
    KernelProgram p = lowerKernel("gelu", {1048576});
    KernelProgram t = tiled(p, {262144});
    CHECK(verify(t).ok());
    CHECK(tileExtents(t, 0) ==
          std::vector<int64_t>{262144, 262144, 262144, 262144});
    const TensorDecl &buf = t.tensor(*t.findTensor("x_tcm"));
    CHECK(buf.space == MemorySpace::kTCM);
    CHECK(buf.shape == std::vector<int64_t>{262144});
    CHECK(printIR(t).find("%x[%v0*262144 +: 262144]") != std::string::npos);
  }

  TEST_CASE("remainder tiles are clamped") {
    KernelProgram p = lowerKernel("gelu", {100});
    KernelProgram t = tiled(p, {32});
    CHECK(tileExtents(t, 0) == std::vector<int64_t>{32, 32, 32, 4});
    checkSameOutputs(p, t);
    oracle::CoverageReport cov = oracle::tileCoverage(t, p.body.front().id);
    CHECK(cov.ok());
    CHECK(cov.executions == 4);
  }

  TEST_CASE("a tile covering the extent runs once") {
    KernelProgram p = lowerKernel("silu", {3, 50});
    KernelProgram t = tiled(p, {8, 64});
    CHECK(*firstLoop(t).upper.as_constant() == 1);
    checkSameOutputs(p, t);
  }

  TEST_CASE("reduction dimensions stay whole") {
    KernelProgram p = fuseElementwise(lowerKernel("softmax", {20, 30}));
    KernelProgram t = tiled(p, {8, 7});
    CHECK(verify(t).ok());
    for (const Op &op : t.body) {
      const GenericOp &g = genericIn(op.as<ForOp>().body);
      if (g.hasReduction())
        CHECK(g.extents[1].is_constant(30));
      else
        CHECK(g.max_extents[1] == 7);
    }
    checkSameOutputs(p, t);
  }

  TEST_CASE("interchange reorders the tile walk") {
    KernelProgram p = lowerKernel("vecadd2d", {10, 12});
    TilingOptions to;
    to.sizes = {4, 5};
    to.interchange = {1, 0};
    KernelProgram t = tileProgram(p, to);
    CHECK(firstLoop(t).upper.is_constant(9));
    // Dimension 0 now varies fastest along the flattened tile loop.
    CHECK(tileExtents(t, 0) == std::vector<int64_t>{4, 4, 2, 4, 4, 2, 4, 4, 2});
    CHECK(tileExtents(t, 1) == std::vector<int64_t>{5, 5, 5, 5, 5, 5, 2, 2, 2});
    checkSameOutputs(p, t);
  }

  TEST_CASE("invalid tile specs") {
    KernelProgram p = lowerKernel("gelu", {64});
    CHECK_THROWS_AS(tiled(p, {-1}), PassError);
    CHECK_THROWS_AS(tiled(p, {8, 8}), PassError);
    TilingOptions to;
    to.sizes = {8};
    to.interchange = {1};
    CHECK_THROWS_AS(tileProgram(p, to), PassError);
  }

  TEST_CASE("default tile sizes fit four working sets in TCM") {
    KernelProgram p = lowerKernel("vecadd2d", {1024, 1024});
    const GenericOp &g = p.body.front().as<GenericOp>();
    std::vector<int64_t> sizes = defaultTileSizes(p, g, kDefaultTcmBytes);
    REQUIRE_FALSE(sizes.empty());
    CHECK(4 * tileSetBytes(p, g, sizes) <= kDefaultTcmBytes);
    KernelProgram t = tileProgram(p, {});
    VerifyOptions vo;
    vo.tcm_bytes = kDefaultTcmBytes;
    CHECK(verify(t, vo).ok());
  }
}

TEST_SUITE("vectorize") {
  TEST_CASE("vector groups and epilogues") {
    CHECK(splitVector(262144, 32).groups == 8192);
    CHECK(splitVector(262144, 32).epilogue == 0);
    CHECK(splitVector(100, 32).groups == 3);
    CHECK(splitVector(100, 32).epilogue == 4);
    CHECK_THROWS_AS(splitVector(10, 0), PassError);
  }

  TEST_CASE("vectorizing annotates without changing results") {
    KernelProgram p = tiled(lowerKernel("gelu", {1000}), {300});
    KernelProgram v = vectorizeInnermost(p, 32);
    CHECK(countAnnotated(v, "vectorized(32)") == 1);
    CHECK(genericIn(firstLoop(v).body).vector_width == 32);
    checkSameOutputs(p, v);
  }

  TEST_CASE("width 1 leaves the structure unchanged") {
    KernelProgram p = lowerKernel("gelu", {64});
    KernelProgram v = vectorizeInnermost(p, 1);
    CHECK(countOps(v, OpKind::kGeneric) == 1);
    CHECK(v.body.front().as<GenericOp>().vector_width == 1);
    checkSameOutputs(p, v);
  }

  TEST_CASE("reductions along the innermost dimension are not vectorized") {
    KernelProgram p = fuseElementwise(lowerKernel("softmax", {4, 64}));
    KernelProgram v = vectorizeInnermost(p, 16);
    for (const Op &op : v.body) {
      const GenericOp &g = op.as<GenericOp>();
      CHECK(g.vector_width == (g.hasReduction() ? 1 : 16));
    }
  }
}
