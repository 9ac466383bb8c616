//===- fusion.h - Producer/consumer fusion of generic ops -------*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_FUSION_H
#define TCMC_FUSION_H

#include "tcmc/ir.h"

#include <vector>

namespace tcmc {

enum class FusionVeto {
  kNone,
  kProducerHasReduction,
  kMapMismatch,
  kMultiUse,
};

const char *fusionVetoName(FusionVeto v);

struct FusionCandidate {
  OpId producer = -1;
  OpId consumer = -1;
  int operand = -1; // consumer input index that reads the producer's result
  TensorId tensor = -1;
};

/// Checks whether the top-level generic `producer` can be folded into input
/// `operand` of the top-level generic `consumer`.
FusionVeto fusionLegal(const KernelProgram &p, OpId producer, OpId consumer,
                       int operand);

struct FusionStats {
  std::vector<FusionCandidate> fired;
};

/// Greedy fixed point, consumers in program order, operands in order.
KernelProgram fuseElementwise(const KernelProgram &p,
                              FusionStats *stats = nullptr);

} // namespace tcmc

#endif // TCMC_FUSION_H
