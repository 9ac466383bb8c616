//===- frontend.h - Kernel DSL parser and lowering --------------*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Row-program kernel language (.tk files):
//
//   kernel softmax(x: in, y: out) {
//     row_minus_max = x - max(x, axis=0);
//     numerator = exp(row_minus_max);
//     denominator = sum(numerator, axis=0);
//     softmax_output = numerator / denominator;
//     store(y, softmax_output);
//   }
//
// Every value is a row (or one row per program instance for 2-D shapes);
// `sum`/`max` with `axis=0` reduce a row to one element that broadcasts
// back over the row. Shapes are bound when lowering.
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_FRONTEND_H
#define TCMC_FRONTEND_H

#include "tcmc/ir.h"

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcmc {

struct SourceSpan {
  int line = 1;   // 1-based
  int column = 1; // 1-based
  int length = 0;
};

class ParseError : public std::runtime_error {
public:
  ParseError(SourceSpan span, const std::string &msg);
  const SourceSpan &span() const { return span_; }
  /// Message without the location prefix.
  const std::string &message() const { return msg_; }

private:
  SourceSpan span_;
  std::string msg_;
};

enum class ExprKind {
  kNumber,
  kName,
  kNeg,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kCall,   // exp, tanh, sqrt, rsqrt, max(a, b), load(param)
  kReduce, // sum(e, axis=k) / max(e, axis=k)
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  ExprKind kind = ExprKind::kNumber;
  SourceSpan span;
  float number = 0.0f;
  std::string name; // identifier or callee
  int axis = 0;
  std::vector<ExprPtr> args;
};

enum class ParamKind { kIn, kOut, kCol };

struct Param {
  std::string name;
  ParamKind kind = ParamKind::kIn;
  SourceSpan span;
};

enum class StmtKind { kConst, kAssign, kStore };

struct Stmt {
  StmtKind kind = StmtKind::kAssign;
  std::string target;
  ExprPtr value;
  SourceSpan span;
};

struct KernelAst {
  std::string name;
  std::vector<Param> params;
  std::vector<Stmt> stmts;

  const Param *findParam(const std::string &n) const;
};

/// Throws ParseError for syntax errors, undefined identifiers, duplicate or
/// missing stores and invalid reduction axes.
KernelAst parseKernel(const std::string &source);
KernelAst parseKernelFile(const std::string &path);

/// Canonical source text; parseKernel(printAst(a)) is structurally equal to a.
std::string printAst(const KernelAst &ast);
/// Structural equality, ignoring spans.
bool astEqual(const KernelAst &a, const KernelAst &b);

struct LowerOptions {
  /// [N] or [R, C]; `col` parameters get shape [C].
  std::vector<int64_t> shape;
  /// Overrides for `const` declarations (e.g. EPSILON).
  std::map<std::string, float> constants;
};

/// One generic per statement plus one per reduction. Throws ParseError for
/// constructs that cannot be lowered.
KernelProgram lowerToGenerics(const KernelAst &ast, const LowerOptions &opts);

/// Value of every constant visible to the kernel body, after overrides.
std::map<std::string, float> kernelConstants(const KernelAst &ast,
                                             const LowerOptions &opts);

} // namespace tcmc

#endif // TCMC_FRONTEND_H
