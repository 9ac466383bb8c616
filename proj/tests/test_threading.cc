//===- test_threading.cc - Virtual thread and fork-join tests -------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "doctest.h"

#include "tcmc/frontend.h"
#include "tcmc/interpreter.h"
#include "tcmc/oracles.h"
#include "tcmc/pass.h"
#include "tcmc/threading.h"
#include "tcmc/tiling.h"

using namespace tcmc;

namespace {

using Ranges = std::vector<std::pair<int64_t, int64_t>>;

KernelProgram tiledKernel(const std::string &name, std::vector<int64_t> shape,
                          std::vector<int64_t> sizes) {
  LowerOptions lo;
  lo.shape = std::move(shape);
  TilingOptions to;
  to.sizes = std::move(sizes);
  return tileProgram(
      lowerToGenerics(
          parseKernelFile(TCMC_SOURCE_DIR "/kernels/" + name + ".tk"), lo),
      to);
}

DistributionPolicy block(int64_t threads = 4) {
  DistributionPolicy d;
  d.num_threads = threads;
  return d;
}

ProfitabilityHeuristic threshold(int64_t points) {
  ProfitabilityHeuristic h;
  h.min_domain_points = points;
  return h;
}

const ForallOp *findForall(const KernelProgram &p) {
  const ForallOp *found = nullptr;
  walk(p.body, [&](const Op &op) {
    if (auto *f = op.getIf<ForallOp>())
      found = f;
  });
  return found;
}

const GenericOp *findGeneric(const Block &b) {
  const GenericOp *found = nullptr;
  walk(b, [&](const Op &op) {
    if (auto *g = op.getIf<GenericOp>(); g && !found)
      found = g;
  });
  return found;
}

void checkSameOutputs(const KernelProgram &a, const KernelProgram &b) {
  TensorMap in = oracle::randomInputs(a, 3);
  ExecOptions threaded;
  threaded.threaded = true;
  TensorMap ref = interpret(a, in);
  CHECK(compareOutputs(ref, interpret(b, in), CompareMode::exact()).ok);
  CHECK(
      compareOutputs(ref, interpret(b, in, threaded), CompareMode::exact()).ok);
}

} // namespace

TEST_SUITE("distribution") {
  TEST_CASE("block ranges split evenly with a short last thread") {
    CHECK(threadRanges(100, block(), 0) == Ranges{{0, 25}});
    CHECK(threadRanges(10, block(), 3) == Ranges{{9, 10}});
    CHECK(threadRanges(2, block(), 3).empty());
  }

  TEST_CASE("block-cyclic ranges interleave chunks") {
    DistributionPolicy d = parseDistribution("cyclic:8", 4);
    CHECK(d.kind == DistributionPolicy::Kind::kBlockCyclic);
    CHECK(threadRanges(100, d, 0) ==
          Ranges{{0, 8}, {32, 40}, {64, 72}, {96, 100}});
    CHECK(threadRanges(100, d, 3) == Ranges{{24, 32}, {56, 64}, {88, 96}});
  }

  TEST_CASE("every index is owned by exactly one thread") {
    for (const char *text : {"block", "cyclic:1", "cyclic:3", "cyclic:64"})
      for (int64_t n : {1, 7, 100, 257}) {
        DistributionPolicy d = parseDistribution(text, 4);
        std::vector<int> owners(n, 0);
        for (int64_t t = 0; t < 4; ++t)
          for (auto [b, e] : threadRanges(n, d, t))
            for (int64_t i = b; i < e; ++i)
              ++owners[i];
        CHECK(std::count(owners.begin(), owners.end(), 1) == n);
      }
  }

  TEST_CASE("malformed policies") {
    CHECK_THROWS_AS(parseDistribution("cyclic", 4), std::invalid_argument);
    CHECK_THROWS_AS(parseDistribution("cyclic:0", 4), std::invalid_argument);
    CHECK_THROWS_AS(parseDistribution("round-robin", 4), std::invalid_argument);
    CHECK_THROWS_AS(parseDistribution("block", 0), std::invalid_argument);
  }
}

TEST_SUITE("virtual threads") {
  TEST_CASE("a 2^18 tile splits into four 2^16 slices") {
    KernelProgram t = tiledKernel("gelu", {1048576}, {262144});
    KernelProgram m = formVirtualThreads(t, block());
    const ForallOp *fa = findForall(m);
    REQUIRE(fa);
    CHECK(fa->num_threads == 4);
    const GenericOp *g = findGeneric(fa->body);
    REQUIRE(g);
    CHECK(g->extents[0].is_constant(65536));
    CHECK(countAnnotated(m, "virtual_threads") == 1);
    CHECK(verify(m).ok());
  }

  TEST_CASE("small tiles stay sequential under the default threshold") {
    KernelProgram t = tiledKernel("gelu", {65536}, {16384});
    KernelProgram m = formVirtualThreads(t, block());
    CHECK(findForall(m) == nullptr);
    CHECK(findForall(formVirtualThreads(t, block(), threshold(1))) != nullptr);
  }

  TEST_CASE("remainder slices are guarded and results are unchanged") {
    KernelProgram t = tiledKernel("silu", {7, 103}, {4, 50});
    for (const char *text : {"block", "cyclic:8"}) {
      KernelProgram m =
          formVirtualThreads(t, parseDistribution(text, 4), threshold(1));
      CHECK(verify(m).ok());
      checkSameOutputs(t, m);
      CHECK(oracle::scanForkJoin(formAsyncThreads(m)).ok());
    }
  }

  TEST_CASE("reduction-only generics are not wrapped") {
    LowerOptions lo;
    lo.shape = {64};
    KernelProgram p = lowerToGenerics(
        parseKernel("kernel k(x: in, y: out) { store(y, sum(x, axis=0)); }"),
        lo);
    KernelProgram m = formVirtualThreads(p, block(), threshold(1));
    // The reduction cannot be split, but its parallel broadcast store can.
    walk(m.body, [&](const Op &op) {
      if (auto *f = op.getIf<ForallOp>())
        CHECK_FALSE(findGeneric(f->body)->hasReduction());
    });
    checkSameOutputs(p, m);
  }

  TEST_CASE("invalid policies throw") {
    KernelProgram t = tiledKernel("gelu", {64}, {16});
    CHECK_THROWS_AS(formVirtualThreads(t, block(0)), PassError);
    CHECK_THROWS_AS(formVirtualThreads(t, block(), threshold(0)), PassError);
  }
}

TEST_SUITE("async") {
  TEST_CASE("each forall becomes a group of async bodies") {
    KernelProgram t = tiledKernel("gelu", {1048576}, {262144});
    KernelProgram a = formAsyncThreads(formVirtualThreads(t, block()));
    CHECK(countOps(a, OpKind::kForall) == 0);
    CHECK(countOps(a, OpKind::kAsyncGroup) == 1);
    CHECK(countOps(a, OpKind::kAsyncExecute) == 1);
    CHECK(countOps(a, OpKind::kAwaitAll) == 1);
    CHECK(verify(a).ok());

    LowerOptions lo;
    lo.shape = {4096};
    KernelProgram small = tileProgram(
        lowerToGenerics(parseKernelFile(TCMC_SOURCE_DIR "/kernels/gelu.tk"),
                        lo),
        [] {
          TilingOptions to;
          to.sizes = {4096};
          return to;
        }());
    KernelProgram as =
        formAsyncThreads(formVirtualThreads(small, block(), threshold(1)));
    TensorMap in = oracle::randomInputs(as, 1);
    ExecTrace tr;
    ExecOptions eo;
    eo.trace = &tr;
    interpret(as, in, eo);
    CHECK(tr.count(OpKind::kAsyncExecute) == 4);
    CHECK(tr.count(OpKind::kAwaitAll) == 1);
    CHECK(oracle::scanForkJoin(as).ok());
  }

  TEST_CASE("programs without foralls are unchanged") {
    KernelProgram t = tiledKernel("gelu", {1024}, {256});
    KernelProgram a = formAsyncThreads(t);
    CHECK(printIR(a).substr(printIR(a).find('\n')) ==
          printIR(t).substr(printIR(t).find('\n')));
  }

  TEST_CASE("nested foralls are rejected") {
    KernelProgram t = tiledKernel("gelu", {1024}, {256});
    KernelProgram m = formVirtualThreads(t, block(), threshold(1));
    ForallOp *outer = nullptr;
    walk(m.body, [&](Op &op) {
      if (auto *f = op.getIf<ForallOp>(); f && !outer)
        outer = f;
    });
    REQUIRE(outer);
    Op inner = m.makeOp(ForallOp{m.newVar(), 2, {}});
    outer->body.push_back(std::move(inner));
    CHECK_THROWS_AS(formAsyncThreads(m), PassError);
  }

  TEST_CASE("overlapping sibling writes are reported") {
    KernelProgram t = tiledKernel("gelu", {4096}, {4096});
    KernelProgram m = formVirtualThreads(t, block(), threshold(1));
    // Pin every thread's slice to the first one.
    walk(m.body, [&](Op &op) {
      if (auto *g = op.getIf<GenericOp>()) {
        g->inputs[0].offsets[0] = IntExpr::constant(0);
        g->outputs[0].offsets[0] = IntExpr::constant(0);
      }
    });
    oracle::ForkJoinReport r = oracle::scanForkJoin(formAsyncThreads(m));
    CHECK_FALSE(r.ok());
  }
}
