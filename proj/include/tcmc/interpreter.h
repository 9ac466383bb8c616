//===- interpreter.h - Reference interpreter --------------------*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Executes a KernelProgram at any pipeline stage. Generic ops iterate their
// domain in lexicographic order and reductions accumulate in ascending index
// order, so every structural pass must reproduce outputs bit for bit.
//
// DMA transfers become visible at the matching dma_wait. Touching a buffer
// with a transfer in flight is an ExecutionFault.
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_INTERPRETER_H
#define TCMC_INTERPRETER_H

#include "tcmc/ir.h"

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcmc {

struct TensorValue {
  std::vector<int64_t> shape;
  std::vector<float> data;

  TensorValue() = default;
  TensorValue(std::vector<int64_t> s, std::vector<float> d);
  explicit TensorValue(std::vector<int64_t> s, float fill = 0.0f);
  int64_t numElements() const;
};

using TensorMap = std::map<std::string, TensorValue>;

class ExecutionFault : public std::runtime_error {
public:
  ExecutionFault(OpId op, const std::string &msg);
  OpId op() const { return op_; }

private:
  OpId op_;
};

struct TraceEvent {
  OpKind kind;
  OpId op = -1;
  int tag = -1; // DMA tag, or -1
};

/// Dynamic record of one interpretation.
struct ExecTrace {
  bool record_events = false;
  /// Executions per op kind name.
  std::map<std::string, int64_t> op_counts;
  /// Executions per annotation. An `if` counts only when its body runs.
  std::map<std::string, int64_t> annotation_counts;
  /// Values read by load_toggle, in order.
  std::vector<int64_t> toggle_values;
  /// "ping" / "pong" for every executed double-buffer sub-kernel.
  std::vector<std::string> subkernels;
  std::map<TagId, int64_t> dma_starts;
  std::map<TagId, int64_t> dma_waits;
  /// Structural ops (everything except generics' inner points), when
  /// record_events is set. Empty in threaded mode bodies.
  std::vector<TraceEvent> events;

  int64_t count(OpKind k) const;
  int64_t annotated(const std::string &a) const;
};

struct ExecOptions {
  /// Runs forall and async_execute bodies on std::thread.
  bool threaded = false;
  ExecTrace *trace = nullptr;
};

/// Input names must match the program's input tensors and shapes must agree.
TensorMap interpret(const KernelProgram &p, const TensorMap &inputs,
                    const ExecOptions &opts = {});

// Comparison -----------------------------------------------------------------

struct CompareMode {
  bool bitexact = true;
  double tol = 0.0;

  static CompareMode exact() { return {}; }
  static CompareMode reltol(double t) { return {false, t}; }
};

struct CompareReport {
  bool ok = true;
  std::string worst_tensor;
  int64_t worst_index = -1;
  float worst_a = 0.0f, worst_b = 0.0f;
  double worst_error = 0.0;
  int64_t mismatches = 0;
  std::string str() const;
};

/// Throws std::invalid_argument when names or shapes differ.
CompareReport compareOutputs(const TensorMap &a, const TensorMap &b,
                             CompareMode mode);

// Tensor files ---------------------------------------------------------------
//
// `<stem>.bin` holds raw little-endian f32 data; `<stem>.shape` holds the
// extents on one line, separated by spaces.

void writeTensor(const std::string &stem, const TensorValue &t);
TensorValue readTensor(const std::string &stem);
/// One row per line, comma-separated. A single row loads as a 1-D tensor.
TensorValue loadCsv(const std::string &path);

} // namespace tcmc

#endif // TCMC_INTERPRETER_H
