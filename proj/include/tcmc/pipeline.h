//===- pipeline.h - Ordered pass pipelines ----------------------*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_PIPELINE_H
#define TCMC_PIPELINE_H

#include "tcmc/math_expand.h"
#include "tcmc/threading.h"
#include "tcmc/tiling.h"

#include <string>
#include <vector>

namespace tcmc {

enum class PassKind { kFuse, kTile, kVectorize, kMt, kAsync, kDb, kMathApprox };

const char *passName(PassKind k);

/// Parses a comma-separated pass list such as "fuse,tile,vectorize".
/// Throws std::invalid_argument for unknown names.
std::vector<PassKind> parsePassList(const std::string &text);

std::string passListStr(const std::vector<PassKind> &passes);

/// The full pipeline: fuse,tile,vectorize,mt,async,db.
std::vector<PassKind> defaultPasses();

struct PipelineSpec {
  std::vector<PassKind> passes = defaultPasses();
  TilingOptions tiling;
  int vector_width = 32;
  DistributionPolicy distribution;
  ProfitabilityHeuristic heuristic;
  /// Stops double buffering after the structural stage.
  bool db_stage1_only = false;
  ApproxPolicy math = ApproxPolicy::approx();
};

/// Throws std::invalid_argument with messages such as "db requires tile" when
/// the pass order breaks a dependency or repeats a pass.
void checkPipeline(const PipelineSpec &spec);

struct Stage {
  /// "frontend" for the input, then the pass name; double buffering yields
  /// "db-s1" and "db-s2".
  std::string name;
  KernelProgram program;
};

/// Runs `spec` over `input`. The result starts with the input program.
std::vector<Stage> runPipeline(const KernelProgram &input,
                               const PipelineSpec &spec);

} // namespace tcmc

#endif // TCMC_PIPELINE_H
