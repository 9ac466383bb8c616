//===- payload.cc - Scalar payload expressions ----------------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/payload.h"

#include "tcmc/mathlib.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace tcmc {

const char *payloadOpName(PayloadOp op) {
  switch (op) {
  case PayloadOp::kArg:
    return "arg";
  case PayloadOp::kConst:
    return "const";
  case PayloadOp::kAdd:
    return "add";
  case PayloadOp::kSub:
    return "sub";
  case PayloadOp::kMul:
    return "mul";
  case PayloadOp::kDiv:
    return "div";
  case PayloadOp::kNeg:
    return "neg";
  case PayloadOp::kMax:
    return "max";
  case PayloadOp::kExp:
    return "exp";
  case PayloadOp::kTanh:
    return "tanh";
  case PayloadOp::kSqrt:
    return "sqrt";
  case PayloadOp::kRsqrt:
    return "rsqrt";
  case PayloadOp::kExpApprox:
    return "exp_approx";
  case PayloadOp::kTanhApprox:
    return "tanh_approx";
  case PayloadOp::kRsqrtApprox:
    return "rsqrt_approx";
  }
  return "?";
}

bool isUnary(PayloadOp op) {
  switch (op) {
  case PayloadOp::kNeg:
  case PayloadOp::kExp:
  case PayloadOp::kTanh:
  case PayloadOp::kSqrt:
  case PayloadOp::kRsqrt:
  case PayloadOp::kExpApprox:
  case PayloadOp::kTanhApprox:
  case PayloadOp::kRsqrtApprox:
    return true;
  default:
    return false;
  }
}

Payload Payload::arg(int index) {
  auto n = std::make_shared<Node>();
  n->op = PayloadOp::kArg;
  n->arg = index;
  return Payload(std::move(n));
}

Payload Payload::constant(float value) {
  auto n = std::make_shared<Node>();
  n->op = PayloadOp::kConst;
  n->value = value;
  return Payload(std::move(n));
}

Payload Payload::unary(PayloadOp op, Payload operand, int param) {
  if (!isUnary(op))
    throw std::invalid_argument(std::string("not a unary payload op: ") +
                                payloadOpName(op));
  auto n = std::make_shared<Node>();
  n->op = op;
  n->param = param;
  n->children.push_back(std::move(operand));
  return Payload(std::move(n));
}

Payload Payload::binary(PayloadOp op, Payload lhs, Payload rhs) {
  switch (op) {
  case PayloadOp::kAdd:
  case PayloadOp::kSub:
  case PayloadOp::kMul:
  case PayloadOp::kDiv:
  case PayloadOp::kMax:
    break;
  default:
    throw std::invalid_argument(std::string("not a binary payload op: ") +
                                payloadOpName(op));
  }
  auto n = std::make_shared<Node>();
  n->op = op;
  n->children.push_back(std::move(lhs));
  n->children.push_back(std::move(rhs));
  return Payload(std::move(n));
}

float applyPayloadOp(PayloadOp op, int param, float a, float b) {
  switch (op) {
  case PayloadOp::kAdd:
    return a + b;
  case PayloadOp::kSub:
    return a - b;
  case PayloadOp::kMul:
    return a * b;
  case PayloadOp::kDiv:
    return a / b;
  case PayloadOp::kNeg:
    return -a;
  case PayloadOp::kMax:
    // NaN-propagating, and identical for both operand orders otherwise.
    if (std::isnan(a) || std::isnan(b))
      return std::numeric_limits<float>::quiet_NaN();
    return a < b ? b : a;
  case PayloadOp::kExp:
    return std::exp(a);
  case PayloadOp::kTanh:
    return std::tanh(a);
  case PayloadOp::kSqrt:
    return std::sqrt(a);
  case PayloadOp::kRsqrt:
    return 1.0f / std::sqrt(a);
  case PayloadOp::kExpApprox:
    return math::expApprox(a, param);
  case PayloadOp::kTanhApprox:
    return math::tanhApprox(a, param);
  case PayloadOp::kRsqrtApprox:
    return math::invSqrtFastUnchecked(a, param);
  case PayloadOp::kArg:
  case PayloadOp::kConst:
    break;
  }
  throw std::logic_error("leaf payload op has no scalar semantics");
}

float Payload::eval(std::span<const float> args) const {
  switch (op()) {
  case PayloadOp::kArg:
    return args[arg_index()];
  case PayloadOp::kConst:
    return value();
  default:
    break;
  }
  float a = children()[0].eval(args);
  float b = children().size() > 1 ? children()[1].eval(args) : 0.0f;
  return applyPayloadOp(op(), param(), a, b);
}

int Payload::max_arg() const {
  if (op() == PayloadOp::kArg)
    return arg_index();
  int m = -1;
  for (const auto &c : children())
    m = std::max(m, c.max_arg());
  return m;
}

bool Payload::uses_arg(int index) const {
  if (op() == PayloadOp::kArg)
    return arg_index() == index;
  return std::any_of(children().begin(), children().end(),
                     [&](const Payload &c) { return c.uses_arg(index); });
}

size_t Payload::node_count() const {
  size_t n = 1;
  for (const auto &c : children())
    n += c.node_count();
  return n;
}

size_t Payload::count(PayloadOp kind) const {
  size_t n = op() == kind ? 1 : 0;
  for (const auto &c : children())
    n += c.count(kind);
  return n;
}

Payload Payload::map_args(const std::function<Payload(int)> &fn) const {
  return rewrite([&](const Payload &p) {
    return p.op() == PayloadOp::kArg ? fn(p.arg_index()) : p;
  });
}

Payload
Payload::rewrite(const std::function<Payload(const Payload &)> &fn) const {
  if (children().empty())
    return fn(*this);
  auto n = std::make_shared<Node>(*node_);
  for (auto &c : n->children)
    c = c.rewrite(fn);
  return fn(Payload(std::move(n)));
}

std::string formatFloat(float v) {
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  if (std::isnan(v))
    return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  std::string s(buf);
  if (s.find_first_of(".en") == std::string::npos)
    s += ".0";
  return s;
}

std::string Payload::str() const {
  switch (op()) {
  case PayloadOp::kArg:
    return "arg" + std::to_string(arg_index());
  case PayloadOp::kConst:
    return formatFloat(value());
  default:
    break;
  }
  std::string s = payloadOpName(op());
  if (op() == PayloadOp::kExpApprox || op() == PayloadOp::kTanhApprox ||
      op() == PayloadOp::kRsqrtApprox)
    s += "<" + std::to_string(param()) + ">";
  s += "(";
  for (size_t i = 0; i < children().size(); ++i) {
    if (i)
      s += ", ";
    s += children()[i].str();
  }
  return s + ")";
}

bool operator==(const Payload &a, const Payload &b) {
  if (a.node_ == b.node_)
    return true;
  if (a.op() != b.op() || a.param() != b.param() ||
      a.children().size() != b.children().size())
    return false;
  if (a.op() == PayloadOp::kArg && a.arg_index() != b.arg_index())
    return false;
  if (a.op() == PayloadOp::kConst &&
      std::memcmp(&a.node_->value, &b.node_->value, sizeof(float)) != 0)
    return false;
  for (size_t i = 0; i < a.children().size(); ++i)
    if (!(a.children()[i] == b.children()[i]))
      return false;
  return true;
}

CompiledPayload::CompiledPayload(const Payload &p) { emit(p); }

int CompiledPayload::emit(const Payload &p) {
  Instr in;
  in.op = p.op();
  in.arg = p.arg_index();
  in.value = p.value();
  in.param = p.param();
  if (!p.children().empty())
    in.a = emit(p.children()[0]);
  if (p.children().size() > 1)
    in.b = emit(p.children()[1]);
  tape_.push_back(in);
  return static_cast<int>(tape_.size()) - 1;
}

float CompiledPayload::run(const float *args, float *scratch) const {
  const size_t n = tape_.size();
  for (size_t i = 0; i < n; ++i) {
    const Instr &in = tape_[i];
    switch (in.op) {
    case PayloadOp::kArg:
      scratch[i] = args[in.arg];
      break;
    case PayloadOp::kConst:
      scratch[i] = in.value;
      break;
    case PayloadOp::kAdd:
      scratch[i] = scratch[in.a] + scratch[in.b];
      break;
    case PayloadOp::kSub:
      scratch[i] = scratch[in.a] - scratch[in.b];
      break;
    case PayloadOp::kMul:
      scratch[i] = scratch[in.a] * scratch[in.b];
      break;
    case PayloadOp::kDiv:
      scratch[i] = scratch[in.a] / scratch[in.b];
      break;
    default:
      scratch[i] = applyPayloadOp(in.op, in.param, scratch[in.a],
                                  in.b >= 0 ? scratch[in.b] : 0.0f);
      break;
    }
  }
  return scratch[n - 1];
}

} // namespace tcmc
