//===- payload.h - Scalar payload expressions of generic ops ----*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// A payload is the scalar computation a generic op performs at one point of
// its iteration domain. Block arguments are numbered: inputs first, then
// (for reduction outputs) the carried accumulator.
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_PAYLOAD_H
#define TCMC_PAYLOAD_H

#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tcmc {

enum class PayloadOp {
  kArg,
  kConst,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kMax,
  kExp,
  kTanh,
  kSqrt,
  kRsqrt,
  // Approximated forms introduced by math expansion. `param` holds the Taylor
  // degree (exp, tanh) or the Newton iteration count (rsqrt).
  kExpApprox,
  kTanhApprox,
  kRsqrtApprox,
};

const char *payloadOpName(PayloadOp op);
bool isUnary(PayloadOp op);

class Payload {
public:
  static Payload arg(int index);
  static Payload constant(float value);
  static Payload unary(PayloadOp op, Payload operand, int param = 0);
  static Payload binary(PayloadOp op, Payload lhs, Payload rhs);

  PayloadOp op() const { return node_->op; }
  int arg_index() const { return node_->arg; }
  float value() const { return node_->value; }
  int param() const { return node_->param; }
  const std::vector<Payload> &children() const { return node_->children; }

  /// Reference evaluator; the interpreter uses CompiledPayload instead.
  float eval(std::span<const float> args) const;

  /// Highest block-argument index referenced, or -1.
  int max_arg() const;
  bool uses_arg(int index) const;
  size_t node_count() const;
  /// Number of nodes of kind `op`.
  size_t count(PayloadOp op) const;

  /// Rewrites every kArg leaf through `fn`.
  Payload map_args(const std::function<Payload(int)> &fn) const;
  /// Rewrites every node bottom-up through `fn`.
  Payload rewrite(const std::function<Payload(const Payload &)> &fn) const;

  /// Canonical s-expression, e.g. `mul(arg0, 0.5)`.
  std::string str() const;

  friend bool operator==(const Payload &a, const Payload &b);

private:
  struct Node {
    PayloadOp op;
    int arg = 0;
    float value = 0.0f;
    int param = 0;
    std::vector<Payload> children;
  };
  explicit Payload(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

/// Scalar semantics shared by every evaluator of payload nodes.
float applyPayloadOp(PayloadOp op, int param, float a, float b);

/// Post-order instruction tape; avoids pointer chasing in the interpreter's
/// inner loop.
class CompiledPayload {
public:
  explicit CompiledPayload(const Payload &p);
  float run(const float *args, float *scratch) const;
  size_t scratch_size() const { return tape_.size(); }

private:
  struct Instr {
    PayloadOp op;
    int a = -1, b = -1;
    int arg = 0;
    float value = 0.0f;
    int param = 0;
  };
  int emit(const Payload &p);
  std::vector<Instr> tape_;
};

std::string formatFloat(float v);

} // namespace tcmc

#endif // TCMC_PAYLOAD_H
