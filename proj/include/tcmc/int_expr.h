//===- int_expr.h - Index expressions over loop variables -------*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Small immutable integer expression trees used for slice offsets, slice
// sizes, loop bounds and guards. Variables are loop induction variables,
// thread indices and values loaded from toggle cells.
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_INT_EXPR_H
#define TCMC_INT_EXPR_H

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>

namespace tcmc {

using VarId = int;

class IntExpr {
public:
  enum class Kind { kConst, kVar, kAdd, kSub, kMul, kMin, kFloorDiv, kMod };

  IntExpr() : IntExpr(constant(0)) {}

  static IntExpr constant(int64_t value);
  static IntExpr var(VarId id);

  Kind kind() const { return node_->kind; }
  int64_t value() const { return node_->value; }
  VarId var_id() const { return static_cast<VarId>(node_->value); }
  const IntExpr &lhs() const { return *node_->lhs; }
  const IntExpr &rhs() const { return *node_->rhs; }

  std::optional<int64_t> as_constant() const;
  bool is_constant(int64_t v) const {
    auto c = as_constant();
    return c && *c == v;
  }
  bool uses_var(VarId id) const;

  /// Evaluates with `vars[id]` giving the current value of each variable.
  int64_t eval(std::span<const int64_t> vars) const;

  /// Replaces variable `id` by `replacement` everywhere.
  IntExpr substitute(VarId id, const IntExpr &replacement) const;

  std::string str() const;

  friend IntExpr operator+(const IntExpr &a, const IntExpr &b);
  friend IntExpr operator-(const IntExpr &a, const IntExpr &b);
  friend IntExpr operator*(const IntExpr &a, int64_t c);
  friend IntExpr operator+(const IntExpr &a, int64_t c) {
    return a + constant(c);
  }
  friend IntExpr operator-(const IntExpr &a, int64_t c) {
    return a - constant(c);
  }
  friend IntExpr min(const IntExpr &a, const IntExpr &b);
  friend IntExpr floordiv(const IntExpr &a, int64_t c);
  friend IntExpr mod(const IntExpr &a, int64_t c);

  friend bool operator==(const IntExpr &a, const IntExpr &b);

private:
  struct Node {
    Kind kind;
    int64_t value = 0;
    std::shared_ptr<const IntExpr> lhs, rhs;
  };
  explicit IntExpr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  static IntExpr make(Kind kind, const IntExpr &a, const IntExpr &b);

  std::shared_ptr<const Node> node_;
};

} // namespace tcmc

#endif // TCMC_INT_EXPR_H
