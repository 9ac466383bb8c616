//===- perf_model.h - Analytic cycle model ----------------------*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// The model walks a program's schedule with concrete loop bounds but no
// data. A generic costs its points times the payload cost, divided by the
// vector width when vectorized. Transfers go through a single DMA engine
// that costs latency + bytes / bandwidth. dma_start only reserves the
// engine, so compute issued before the matching dma_wait overlaps with the
// transfer. Async bodies run on a fixed pool of vector contexts.
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_PERF_MODEL_H
#define TCMC_PERF_MODEL_H

#include "tcmc/frontend.h"
#include "tcmc/ir.h"
#include "tcmc/pipeline.h"

#include <map>
#include <string>
#include <vector>

namespace tcmc {

struct MachineConfig {
  double dma_bandwidth_bytes_per_cycle = 32.0;
  double dma_latency_cycles = 200.0;
  /// Cycles per payload node kind, keyed by payload op name.
  std::map<std::string, double> op_cycles;
  /// Cycles per operand element read or written at one domain point.
  double access_cycles = 2.0;
  /// vectorized(W) generics process W points per step.
  bool vector_width_effect = true;
  /// f16 generics process twice as many lanes per vector.
  bool f16_narrow = true;
  int64_t num_hvx_contexts = 4;
  double thread_spawn_cycles = 4000.0;
  double barrier_cycles = 4000.0;
  int64_t tcm_bytes = int64_t{8} << 20;
  /// Compute slows down by `locality_penalty` when one generic's operand
  /// windows exceed this many bytes.
  int64_t context_window_bytes = 192 << 10;
  double locality_penalty = 2.0;

  MachineConfig();
  double opCycles(PayloadOp op) const;
  /// Flat `key = value` text that parseMachineConfig reads back.
  std::string str() const;
};

/// Throws std::invalid_argument for unknown keys, malformed lines and values
/// that break the invariants (negative costs, no contexts, zero bandwidth).
MachineConfig parseMachineConfig(const std::string &text);
MachineConfig loadMachineConfig(const std::string &path);

/// Same machine with zero DMA latency, spawn and barrier costs.
MachineConfig zeroOverheadConfig(MachineConfig base);

struct TimingReport {
  double total_cycles = 0;
  double compute_cycles = 0;
  double transfer_cycles = 0;
  /// compute + transfer + overhead - total: work hidden by overlap.
  double overlapped_cycles = 0;
  double overhead_cycles = 0;
  /// transfer / (transfer + compute).
  double memory_fraction = 0;
  /// Cycles per iteration of the last top-level tile loop, measured between
  /// the second and the last iteration when there are at least three.
  double steady_state_cycles = 0;
};

/// Throws ExecutionFault for structural faults (waiting on a tag with no
/// transfer, transfers left in flight).
TimingReport simulate(const KernelProgram &p, const MachineConfig &config);

/// 1 / max(m, 1 - m). Throws std::invalid_argument outside [0, 1].
double idealOverlapSpeedup(double m);

struct OverlapPoint {
  double m = 0;
  double ideal = 0;
  double measured = 0;
  TimingReport plain, double_buffered;
};

/// Builds a tile loop that only loads, with compute and transfer per tile in
/// the ratio given by `m`, double-buffers it and compares the steady-state
/// iteration times under zeroOverheadConfig(base).
OverlapPoint measureOverlap(double m, const MachineConfig &base);

struct SweepRow {
  std::string kernel;
  std::string size;
  std::string passes;
  TimingReport report;
  double speedup = 1.0;
};

std::string csvHeader();
std::string toCsv(const std::vector<SweepRow> &rows);

/// Single-threaded (fuse,tile,vectorize) against multi-threaded (plus
/// mt,async) for each 1-D size. MT rows carry ST/MT as speedup.
/// The profitability threshold is lowered to 1 so every size is threaded.
std::vector<SweepRow> threadSweep(const KernelAst &kernel,
                                  const std::vector<int64_t> &sizes,
                                  const MachineConfig &config);

struct Rung {
  std::string label;
  std::vector<PassKind> passes;
};

/// Scalar, Vec, Vec+MT, Vec+MT+DB.
std::vector<Rung> standardLadder();

/// One row per rung; speedup is relative to the first rung.
std::vector<SweepRow> passLadder(const KernelAst &kernel,
                                 const std::vector<int64_t> &shape,
                                 const std::vector<Rung> &ladder,
                                 const MachineConfig &config);

std::vector<SweepRow> overlapSweep(const std::vector<double> &fractions,
                                   const MachineConfig &config);

} // namespace tcmc

#endif // TCMC_PERF_MODEL_H
