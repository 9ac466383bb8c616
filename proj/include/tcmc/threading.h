//===- threading.h - Virtual threads and fork-join lowering -----*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Stage 1 wraps profitable tiled generics in `forall` ops that partition the
// widest parallel dimension across threads. Stage 2 rewrites each forall
// into async_group / for { async_execute; add_to_group } / await_all.
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_THREADING_H
#define TCMC_THREADING_H

#include "tcmc/ir.h"
#include "tcmc/pass.h"

#include <string>
#include <utility>
#include <vector>

namespace tcmc {

struct DistributionPolicy {
  enum class Kind { kBlock, kBlockCyclic };
  Kind kind = Kind::kBlock;
  int64_t chunk = 1; // block-cyclic only
  int64_t num_threads = 4;

  std::string str() const;
};

/// Parses `block` or `cyclic:CHUNK`. Throws std::invalid_argument.
DistributionPolicy parseDistribution(const std::string &text,
                                     int64_t num_threads);

struct ProfitabilityHeuristic {
  int64_t min_domain_points = 32768;
};

/// Index ranges [begin, end) owned by `thread` when `n` iterations are
/// distributed under `policy`.
std::vector<std::pair<int64_t, int64_t>>
threadRanges(int64_t n, const DistributionPolicy &policy, int64_t thread);

KernelProgram formVirtualThreads(const KernelProgram &p,
                                 const DistributionPolicy &policy,
                                 const ProfitabilityHeuristic &heuristic = {});

/// Throws PassError for nested foralls.
KernelProgram formAsyncThreads(const KernelProgram &p);

} // namespace tcmc

#endif // TCMC_THREADING_H
