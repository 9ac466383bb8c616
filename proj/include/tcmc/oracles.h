//===- oracles.h - Independent references for testing -----------*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Independent references for the compiler. Nothing here reuses the lowering
// or the interpreter's execution model:
//
//   * formula oracles for the shipped kernels, evaluated in double precision
//     and rounded to f32 once at the end;
//   * a direct evaluator of kernel ASTs in f32 that performs the same scalar
//     operations in the same order as the lowered program (bit-exact);
//   * a seeded generator of random kernels;
//   * concrete scanners for tile coverage and fork-join disjointness.
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_ORACLES_H
#define TCMC_ORACLES_H

#include "tcmc/frontend.h"
#include "tcmc/interpreter.h"

#include <cstdint>
#include <string>
#include <vector>

namespace tcmc::oracle {

struct OracleOptions {
  /// RMSNorm epsilon.
  double epsilon = 1e-6;
};

/// Known names: softmax, gelu, silu, rmsnorm, vecadd2d, expseries. Throws
/// std::invalid_argument for anything else or for missing inputs.
TensorMap oracleEval(const std::string &kernel, const TensorMap &inputs,
                     const OracleOptions &opts = {});

/// Evaluates `ast` statement by statement in f32.
TensorMap evalAst(const KernelAst &ast, const TensorMap &inputs,
                  const LowerOptions &opts);

/// Uniform values in [lo, hi] for every input of `p`, seeded.
TensorMap randomInputs(const KernelProgram &p, uint64_t seed, float lo = -1,
                       float hi = 1);

//===----------------------------------------------------------------------===//
// Random programs
//===----------------------------------------------------------------------===//

struct RandomProgramSpec {
  uint64_t seed = 0;
  /// Number of statements, 1 to 5.
  int length = 3;
  /// Empty picks one of (16), (8, 16), (127, 513) from the seed.
  std::vector<int64_t> shape;
  /// Chance that a statement after the first is a reduction. At most one
  /// reduction is generated per program.
  double reduction_probability = 0.35;
};

struct RandomProgram {
  std::string source;
  KernelAst ast;
  LowerOptions lower;
  KernelProgram program;
};

/// Throws std::invalid_argument for a length outside [1, 5].
RandomProgram genRandomProgram(const RandomProgramSpec &spec);

//===----------------------------------------------------------------------===//
// Structural scanners
//===----------------------------------------------------------------------===//

struct CoverageReport {
  /// Output elements written by the generic 0 times and more than once.
  int64_t uncovered = 0;
  int64_t overlapping = 0;
  int64_t executions = 0;
  bool ok() const { return uncovered == 0 && overlapping == 0; }
};

/// Runs the schedule of `p` with concrete loop bounds and maps every write of
/// generic `op` back to its DDR output through the copies that drain TCM
/// buffers. Each element of each DDR tensor the generic produces must be
/// written exactly once.
CoverageReport tileCoverage(const KernelProgram &p, OpId op);

struct ForkJoinReport {
  std::vector<std::string> issues;
  int64_t groups = 0;
  bool ok() const { return issues.empty(); }
};

/// Checks that the bodies joined by each await_all write pairwise disjoint
/// windows and never read what a sibling writes, and that every async body
/// is joined before its group is reused.
ForkJoinReport scanForkJoin(const KernelProgram &p);

} // namespace tcmc::oracle

#endif // TCMC_ORACLES_H
