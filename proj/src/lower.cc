//===- lower.cc - Lowering kernel ASTs to generic ops ---------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/frontend.h"

#include <algorithm>
#include <set>

namespace tcmc {

namespace {

/// Shape class of a value relative to the kernel shape S = [.., C].
enum class ValueKind {
  kFull,    // S
  kReduced, // S with the row dimension reduced to 1
  kCol,     // [C], broadcast over rows
};

struct Value {
  TensorId tensor = -1;
  ValueKind kind = ValueKind::kFull;
};

class Lowerer {
public:
  Lowerer(const KernelAst &ast, const LowerOptions &opts)
      : ast_(ast), opts_(opts) {}

  KernelProgram run() {
    const auto &s = opts_.shape;
    if (s.empty() || s.size() > 2 ||
        std::any_of(s.begin(), s.end(), [](int64_t e) { return e < 1; }))
      throw std::invalid_argument("kernel shape must be [N] or [R, C]");
    rank_ = static_cast<int>(s.size());
    cols_ = s.back();
    red_shape_ =
        rank_ == 2 ? std::vector<int64_t>{s[0], 1} : std::vector<int64_t>{1};

    p_.name = ast_.name;
    p_.stage = "frontend";
    constants_ = kernelConstants(ast_, opts_);

    for (const Param &prm : ast_.params) {
      TensorId id;
      switch (prm.kind) {
      case ParamKind::kIn:
        id = p_.addTensor(prm.name, s, MemorySpace::kDDR, TensorRole::kInput);
        p_.inputs.push_back(id);
        env_[prm.name] = {id, ValueKind::kFull};
        break;
      case ParamKind::kCol:
        id = p_.addTensor(prm.name, {cols_}, MemorySpace::kDDR,
                          TensorRole::kInput);
        p_.inputs.push_back(id);
        env_[prm.name] = {id, ValueKind::kCol};
        break;
      case ParamKind::kOut:
        id = p_.addTensor(prm.name, s, MemorySpace::kDDR, TensorRole::kOutput);
        p_.outputs.push_back(id);
        outputs_[prm.name] = id;
        break;
      }
    }

    for (const Stmt &st : ast_.stmts) {
      switch (st.kind) {
      case StmtKind::kConst:
        break;
      case StmtKind::kAssign:
        lowerAssign(st);
        break;
      case StmtKind::kStore:
        lowerStore(st);
        break;
      }
    }
    return std::move(p_);
  }

private:
  std::string freshName(const std::string &base) const {
    return p_.freshName(base);
  }

  std::vector<int64_t> shapeOf(ValueKind k) const {
    switch (k) {
    case ValueKind::kFull:
      return opts_.shape;
    case ValueKind::kReduced:
      return red_shape_;
    case ValueKind::kCol:
      return {cols_};
    }
    return {};
  }

  /// Map from a full-shape domain to an operand of kind `k`.
  IndexMap fullDomainMap(ValueKind k) const {
    IndexMap m;
    switch (k) {
    case ValueKind::kFull:
      return IndexMap::identity(rank_);
    case ValueKind::kReduced:
      if (rank_ == 2)
        m.results = {0, std::nullopt};
      else
        m.results = {std::nullopt};
      return m;
    case ValueKind::kCol:
      m.results = {rank_ - 1};
      return m;
    }
    return m;
  }

  static int leafIndex(std::vector<Value> &leaves, Value v) {
    for (size_t i = 0; i < leaves.size(); ++i)
      if (leaves[i].tensor == v.tensor)
        return static_cast<int>(i);
    leaves.push_back(v);
    return static_cast<int>(leaves.size() - 1);
  }

  /// Payload for `e` with leaves collected into `leaves`. Reductions inside
  /// `e` are emitted as their own generics first.
  Payload build(const Expr &e, std::vector<Value> &leaves,
                const std::string &hint) {
    auto bin = [&](PayloadOp op) {
      Payload l = build(*e.args[0], leaves, hint);
      Payload r = build(*e.args[1], leaves, hint);
      return Payload::binary(op, l, r);
    };
    switch (e.kind) {
    case ExprKind::kNumber:
      return Payload::constant(e.number);
    case ExprKind::kName: {
      auto c = constants_.find(e.name);
      if (c != constants_.end())
        return Payload::constant(c->second);
      auto v = env_.find(e.name);
      if (v == env_.end())
        throw ParseError(e.span, "undefined identifier '" + e.name + "'");
      return Payload::arg(leafIndex(leaves, v->second));
    }
    case ExprKind::kNeg:
      return Payload::unary(PayloadOp::kNeg, build(*e.args[0], leaves, hint));
    case ExprKind::kAdd:
      return bin(PayloadOp::kAdd);
    case ExprKind::kSub:
      return bin(PayloadOp::kSub);
    case ExprKind::kMul:
      return bin(PayloadOp::kMul);
    case ExprKind::kDiv:
      return bin(PayloadOp::kDiv);
    case ExprKind::kCall: {
      if (e.name == "load")
        return build(*e.args[0], leaves, hint);
      if (e.name == "max")
        return bin(PayloadOp::kMax);
      PayloadOp op = e.name == "exp"    ? PayloadOp::kExp
                     : e.name == "tanh" ? PayloadOp::kTanh
                     : e.name == "sqrt" ? PayloadOp::kSqrt
                                        : PayloadOp::kRsqrt;
      return Payload::unary(op, build(*e.args[0], leaves, hint));
    }
    case ExprKind::kReduce: {
      Value v = emitReduce(e, freshName(hint + "_" + e.name));
      return Payload::arg(leafIndex(leaves, v));
    }
    }
    throw ParseError(e.span, "unsupported expression");
  }

  Value emitReduce(const Expr &e, const std::string &name) {
    std::vector<Value> leaves;
    Payload operand = build(*e.args[0], leaves, name);
    const int acc = static_cast<int>(leaves.size());
    Combinator comb = e.name == "sum" ? Combinator::kSum : Combinator::kMax;
    Payload payload = Payload::binary(
        comb == Combinator::kSum ? PayloadOp::kAdd : PayloadOp::kMax,
        Payload::arg(acc), operand);

    GenericOp g = domain(opts_.shape);
    g.iterators.back() = IteratorKind::kReduction;
    for (const Value &l : leaves) {
      g.inputs.push_back(View::whole(p_.tensor(l.tensor)));
      g.input_maps.push_back(fullDomainMap(l.kind));
    }
    TensorId out =
        p_.addTensor(name, red_shape_, MemorySpace::kDDR, TensorRole::kTemp);
    g.outputs.push_back(View::whole(p_.tensor(out)));
    g.output_maps.push_back(fullDomainMap(ValueKind::kReduced));
    g.payloads.push_back(payload);
    g.combinators.push_back(comb);
    p_.body.push_back(p_.makeOp(std::move(g)));
    return {out, ValueKind::kReduced};
  }

  static GenericOp domain(const std::vector<int64_t> &shape) {
    GenericOp g;
    for (int64_t e : shape) {
      g.extents.push_back(IntExpr::constant(e));
      g.max_extents.push_back(e);
      g.iterators.push_back(IteratorKind::kParallel);
    }
    return g;
  }

  /// Elementwise generic computing `e`, written to `dest` when given.
  Value emitElementwise(const Expr &e, const std::string &name,
                        std::optional<TensorId> dest) {
    std::vector<Value> leaves;
    Payload payload = build(e, leaves, name);

    bool any_full = false, any_red = false, any_col = false;
    for (const Value &l : leaves) {
      any_full |= l.kind == ValueKind::kFull;
      any_red |= l.kind == ValueKind::kReduced;
      any_col |= l.kind == ValueKind::kCol;
    }
    ValueKind kind = ValueKind::kFull;
    if (!dest && !any_full && !(any_red && any_col)) {
      if (any_red)
        kind = ValueKind::kReduced;
      else if (any_col)
        kind = ValueKind::kCol;
    }

    GenericOp g = domain(shapeOf(kind));
    for (const Value &l : leaves) {
      g.inputs.push_back(View::whole(p_.tensor(l.tensor)));
      g.input_maps.push_back(kind == ValueKind::kFull
                                 ? fullDomainMap(l.kind)
                                 : IndexMap::identity(g.rank()));
    }
    TensorId out = dest ? *dest
                        : p_.addTensor(name, shapeOf(kind), MemorySpace::kDDR,
                                       TensorRole::kTemp);
    g.outputs.push_back(View::whole(p_.tensor(out)));
    g.output_maps.push_back(IndexMap::identity(g.rank()));
    g.payloads.push_back(payload);
    g.combinators.push_back(Combinator::kNone);
    p_.body.push_back(p_.makeOp(std::move(g)));
    return {out, kind};
  }

  static const Expr &stripLoad(const Expr &e) {
    if (e.kind == ExprKind::kCall && e.name == "load")
      return *e.args[0];
    return e;
  }

  void lowerAssign(const Stmt &st) {
    const Expr &e = stripLoad(*st.value);
    if (e.kind == ExprKind::kName && !constants_.count(e.name)) {
      env_[st.target] = env_.at(e.name);
      return;
    }
    if (e.kind == ExprKind::kReduce) {
      env_[st.target] = emitReduce(e, freshName(st.target));
      return;
    }
    env_[st.target] = emitElementwise(e, freshName(st.target), std::nullopt);
  }

  /// Redirects every use of `from` to `to` and drops the declaration.
  void retarget(TensorId from, TensorId to) {
    walk(p_.body, [&](Op &op) {
      if (auto *g = op.getIf<GenericOp>()) {
        for (View &v : g->inputs)
          if (v.tensor == from)
            v.tensor = to;
        for (View &v : g->outputs)
          if (v.tensor == from)
            v.tensor = to;
      }
    });
    for (auto &[n, v] : env_)
      if (v.tensor == from)
        v.tensor = to;
    p_.removeTensor(from);
  }

  void lowerStore(const Stmt &st) {
    TensorId out = outputs_.at(st.target);
    const Expr &e = stripLoad(*st.value);
    if (e.kind == ExprKind::kName && env_.count(e.name)) {
      Value v = env_.at(e.name);
      if (v.kind == ValueKind::kFull && v.tensor >= 0 &&
          p_.tensor(v.tensor).role == TensorRole::kTemp) {
        retarget(v.tensor, out);
        return;
      }
    }
    emitElementwise(e, st.target, out);
  }

  const KernelAst &ast_;
  const LowerOptions &opts_;
  KernelProgram p_;
  int rank_ = 1;
  int64_t cols_ = 1;
  std::vector<int64_t> red_shape_;
  std::map<std::string, float> constants_;
  std::map<std::string, Value> env_;
  std::map<std::string, TensorId> outputs_;
};

} // namespace

std::map<std::string, float> kernelConstants(const KernelAst &ast,
                                             const LowerOptions &opts) {
  std::map<std::string, float> c;
  c["NUM_COLS"] =
      opts.shape.empty() ? 1.0f : static_cast<float>(opts.shape.back());
  for (const Stmt &st : ast.stmts) {
    if (st.kind != StmtKind::kConst)
      continue;
    auto o = opts.constants.find(st.target);
    c[st.target] = o != opts.constants.end() ? o->second : st.value->number;
  }
  return c;
}

KernelProgram lowerToGenerics(const KernelAst &ast, const LowerOptions &opts) {
  return Lowerer(ast, opts).run();
}

} // namespace tcmc
