//===- int_expr.cc - Index expressions over loop variables ----------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/int_expr.h"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace tcmc {

namespace {

int64_t floorDivide(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0)))
    --q;
  return q;
}

int64_t floorMod(int64_t a, int64_t b) { return a - floorDivide(a, b) * b; }

} // namespace

IntExpr IntExpr::constant(int64_t value) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::kConst;
  n->value = value;
  return IntExpr(std::move(n));
}

IntExpr IntExpr::var(VarId id) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::kVar;
  n->value = id;
  return IntExpr(std::move(n));
}

IntExpr IntExpr::make(Kind kind, const IntExpr &a, const IntExpr &b) {
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->lhs = std::make_shared<const IntExpr>(a);
  n->rhs = std::make_shared<const IntExpr>(b);
  return IntExpr(std::move(n));
}

std::optional<int64_t> IntExpr::as_constant() const {
  if (kind() == Kind::kConst)
    return value();
  return std::nullopt;
}

bool IntExpr::uses_var(VarId id) const {
  switch (kind()) {
  case Kind::kConst:
    return false;
  case Kind::kVar:
    return var_id() == id;
  default:
    return lhs().uses_var(id) || rhs().uses_var(id);
  }
}

int64_t IntExpr::eval(std::span<const int64_t> vars) const {
  switch (kind()) {
  case Kind::kConst:
    return value();
  case Kind::kVar:
    if (var_id() < 0 || static_cast<size_t>(var_id()) >= vars.size())
      throw std::out_of_range("unbound index variable %v" +
                              std::to_string(var_id()));
    return vars[var_id()];
  case Kind::kAdd:
    return lhs().eval(vars) + rhs().eval(vars);
  case Kind::kSub:
    return lhs().eval(vars) - rhs().eval(vars);
  case Kind::kMul:
    return lhs().eval(vars) * rhs().eval(vars);
  case Kind::kMin:
    return std::min(lhs().eval(vars), rhs().eval(vars));
  case Kind::kFloorDiv:
    return floorDivide(lhs().eval(vars), rhs().eval(vars));
  case Kind::kMod:
    return floorMod(lhs().eval(vars), rhs().eval(vars));
  }
  return 0;
}

IntExpr IntExpr::substitute(VarId id, const IntExpr &replacement) const {
  switch (kind()) {
  case Kind::kConst:
    return *this;
  case Kind::kVar:
    return var_id() == id ? replacement : *this;
  case Kind::kAdd:
    return lhs().substitute(id, replacement) +
           rhs().substitute(id, replacement);
  case Kind::kSub:
    return lhs().substitute(id, replacement) -
           rhs().substitute(id, replacement);
  case Kind::kMul:
    return lhs().substitute(id, replacement) * *rhs().as_constant();
  case Kind::kMin:
    return min(lhs().substitute(id, replacement),
               rhs().substitute(id, replacement));
  case Kind::kFloorDiv:
    return floordiv(lhs().substitute(id, replacement), rhs().value());
  case Kind::kMod:
    return mod(lhs().substitute(id, replacement), rhs().value());
  }
  return *this;
}

IntExpr operator+(const IntExpr &a, const IntExpr &b) {
  auto ca = a.as_constant(), cb = b.as_constant();
  if (ca && cb)
    return IntExpr::constant(*ca + *cb);
  if (ca && *ca == 0)
    return b;
  if (cb && *cb == 0)
    return a;
  return IntExpr::make(IntExpr::Kind::kAdd, a, b);
}

IntExpr operator-(const IntExpr &a, const IntExpr &b) {
  auto ca = a.as_constant(), cb = b.as_constant();
  if (ca && cb)
    return IntExpr::constant(*ca - *cb);
  if (cb && *cb == 0)
    return a;
  if (a == b)
    return IntExpr::constant(0);
  return IntExpr::make(IntExpr::Kind::kSub, a, b);
}

IntExpr operator*(const IntExpr &a, int64_t c) {
  if (auto ca = a.as_constant())
    return IntExpr::constant(*ca * c);
  if (c == 0)
    return IntExpr::constant(0);
  if (c == 1)
    return a;
  return IntExpr::make(IntExpr::Kind::kMul, a, IntExpr::constant(c));
}

IntExpr min(const IntExpr &a, const IntExpr &b) {
  auto ca = a.as_constant(), cb = b.as_constant();
  if (ca && cb)
    return IntExpr::constant(std::min(*ca, *cb));
  if (a == b)
    return a;
  return IntExpr::make(IntExpr::Kind::kMin, a, b);
}

IntExpr floordiv(const IntExpr &a, int64_t c) {
  assert(c > 0 && "floordiv by non-positive constant");
  if (auto ca = a.as_constant())
    return IntExpr::constant(floorDivide(*ca, c));
  if (c == 1)
    return a;
  return IntExpr::make(IntExpr::Kind::kFloorDiv, a, IntExpr::constant(c));
}

IntExpr mod(const IntExpr &a, int64_t c) {
  assert(c > 0 && "mod by non-positive constant");
  if (auto ca = a.as_constant())
    return IntExpr::constant(floorMod(*ca, c));
  if (c == 1)
    return IntExpr::constant(0);
  return IntExpr::make(IntExpr::Kind::kMod, a, IntExpr::constant(c));
}

bool operator==(const IntExpr &a, const IntExpr &b) {
  if (a.node_ == b.node_)
    return true;
  if (a.kind() != b.kind())
    return false;
  switch (a.kind()) {
  case IntExpr::Kind::kConst:
  case IntExpr::Kind::kVar:
    return a.value() == b.value();
  default:
    return a.lhs() == b.lhs() && a.rhs() == b.rhs();
  }
}

std::string IntExpr::str() const {
  switch (kind()) {
  case Kind::kConst:
    return std::to_string(value());
  case Kind::kVar:
    return "%v" + std::to_string(var_id());
  case Kind::kAdd:
    return lhs().str() + " + " + rhs().str();
  case Kind::kSub: {
    std::string r = rhs().str();
    if (rhs().kind() == Kind::kAdd || rhs().kind() == Kind::kSub)
      r = "(" + r + ")";
    return lhs().str() + " - " + r;
  }
  case Kind::kMul: {
    std::string l = lhs().str();
    if (lhs().kind() == Kind::kAdd || lhs().kind() == Kind::kSub)
      l = "(" + l + ")";
    return l + "*" + rhs().str();
  }
  case Kind::kMin:
    return "min(" + lhs().str() + ", " + rhs().str() + ")";
  case Kind::kFloorDiv:
    return "floordiv(" + lhs().str() + ", " + rhs().str() + ")";
  case Kind::kMod:
    return "mod(" + lhs().str() + ", " + rhs().str() + ")";
  }
  return "?";
}

} // namespace tcmc
