//===- oracles.cc - Independent references for testing --------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/oracles.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>

namespace tcmc::oracle {

//===----------------------------------------------------------------------===//
// Formula oracles
//===----------------------------------------------------------------------===//

namespace {

const TensorValue &input(const TensorMap &in, const std::string &name) {
  auto it = in.find(name);
  if (it == in.end())
    throw std::invalid_argument("oracle input '" + name + "' missing");
  return it->second;
}

/// Rows of a [N] or [R, C] tensor: {R, C}.
std::pair<int64_t, int64_t> rowsCols(const TensorValue &t) {
  int64_t c = t.shape.back();
  return {c == 0 ? 0 : t.numElements() / c, c};
}

template <typename Fn> TensorValue elementwise(const TensorValue &x, Fn fn) {
  TensorValue y(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i)
    y.data[i] = static_cast<float>(fn(static_cast<double>(x.data[i])));
  return y;
}

} // namespace

TensorMap oracleEval(const std::string &kernel, const TensorMap &in,
                     const OracleOptions &opts) {
  TensorMap out;
  if (kernel == "softmax") {
    const TensorValue &x = input(in, "x");
    auto [rows, cols] = rowsCols(x);
    TensorValue y(x.shape);
    for (int64_t r = 0; r < rows; ++r) {
      const float *row = &x.data[r * cols];
      double mx = -INFINITY, sum = 0;
      for (int64_t c = 0; c < cols; ++c)
        mx = std::max(mx, static_cast<double>(row[c]));
      for (int64_t c = 0; c < cols; ++c)
        sum += std::exp(row[c] - mx);
      for (int64_t c = 0; c < cols; ++c)
        y.data[r * cols + c] = static_cast<float>(std::exp(row[c] - mx) / sum);
    }
    out["y"] = std::move(y);
  } else if (kernel == "gelu") {
    const double k = std::sqrt(2.0 / M_PI);
    out["y"] = elementwise(input(in, "x"), [&](double v) {
      return 0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v)));
    });
  } else if (kernel == "silu") {
    out["y"] = elementwise(input(in, "x"),
                           [](double v) { return v / (1.0 + std::exp(-v)); });
  } else if (kernel == "rmsnorm") {
    const TensorValue &x = input(in, "x");
    const TensorValue &g = input(in, "g");
    auto [rows, cols] = rowsCols(x);
    TensorValue y(x.shape);
    for (int64_t r = 0; r < rows; ++r) {
      double sq = 0;
      for (int64_t c = 0; c < cols; ++c)
        sq += static_cast<double>(x.data[r * cols + c]) * x.data[r * cols + c];
      double rms = std::sqrt(sq / static_cast<double>(cols) + opts.epsilon);
      for (int64_t c = 0; c < cols; ++c)
        y.data[r * cols + c] =
            static_cast<float>(x.data[r * cols + c] / rms * g.data[c]);
    }
    out["y"] = std::move(y);
  } else if (kernel == "vecadd2d") {
    const TensorValue &a = input(in, "a");
    const TensorValue &b = input(in, "b");
    TensorValue c(a.shape);
    for (size_t i = 0; i < a.data.size(); ++i)
      c.data[i] = static_cast<float>(static_cast<double>(a.data[i]) +
                                     static_cast<double>(b.data[i]));
    out["c"] = std::move(c);
  } else if (kernel == "expseries") {
    out["y"] = elementwise(input(in, "x"), [](double v) {
      double term = 1, sum = 1;
      for (int k = 1; k <= 8; ++k) {
        term *= v / k;
        sum += term;
      }
      return sum;
    });
  } else {
    throw std::invalid_argument("no oracle for kernel '" + kernel + "'");
  }
  return out;
}

//===----------------------------------------------------------------------===//
// Direct AST evaluation
//===----------------------------------------------------------------------===//

namespace {

/// Evaluates expressions at one point (r, c) of the kernel shape. Reductions
/// are computed once per row and cached.
class AstEvaluator {
public:
  AstEvaluator(const KernelAst &ast, const TensorMap &inputs,
               const LowerOptions &opts)
      : ast_(ast), consts_(kernelConstants(ast, opts)) {
    const auto &s = opts.shape;
    if (s.empty() || s.size() > 2)
      throw std::invalid_argument("shape must be [N] or [R, C]");
    shape_ = s;
    rows_ = s.size() == 2 ? s[0] : 1;
    cols_ = s.back();
    for (const Param &p : ast.params) {
      if (p.kind == ParamKind::kOut)
        continue;
      const TensorValue &t = input(inputs, p.name);
      values_[p.name] = {p.kind == ParamKind::kCol, t.data};
    }
  }

  TensorMap run() {
    TensorMap out;
    for (const Stmt &st : ast_.stmts) {
      if (st.kind == StmtKind::kConst)
        continue;
      TensorValue v = materialize(*st.value);
      if (st.kind == StmtKind::kAssign)
        values_[st.target] = {false, std::move(v.data)};
      else
        out[st.target] = std::move(v);
    }
    return out;
  }

private:
  struct Value {
    bool col = false; // [C], broadcast over rows
    std::vector<float> data;
  };

  TensorValue materialize(const Expr &e) {
    TensorValue t(shape_);
    for (int64_t r = 0; r < rows_; ++r)
      for (int64_t c = 0; c < cols_; ++c)
        t.data[r * cols_ + c] = at(e, r, c);
    return t;
  }

  float at(const Expr &e, int64_t r, int64_t c) {
    auto bin = [&](PayloadOp op) {
      float a = at(*e.args[0], r, c);
      float b = at(*e.args[1], r, c);
      return applyPayloadOp(op, 0, a, b);
    };
    switch (e.kind) {
    case ExprKind::kNumber:
      return e.number;
    case ExprKind::kName: {
      auto k = consts_.find(e.name);
      if (k != consts_.end())
        return k->second;
      const Value &v = values_.at(e.name);
      return v.col ? v.data[c] : v.data[r * cols_ + c];
    }
    case ExprKind::kNeg:
      return applyPayloadOp(PayloadOp::kNeg, 0, at(*e.args[0], r, c), 0);
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
        return at(*e.args[0], r, c);
      if (e.name == "max")
        return bin(PayloadOp::kMax);
      PayloadOp op = e.name == "exp"    ? PayloadOp::kExp
                     : e.name == "tanh" ? PayloadOp::kTanh
                     : e.name == "sqrt" ? PayloadOp::kSqrt
                                        : PayloadOp::kRsqrt;
      return applyPayloadOp(op, 0, at(*e.args[0], r, c), 0);
    }
    case ExprKind::kReduce: {
      auto &rows = reduced_[&e];
      if (rows.empty()) {
        bool sum = e.name == "sum";
        Combinator comb = sum ? Combinator::kSum : Combinator::kMax;
        PayloadOp op = sum ? PayloadOp::kAdd : PayloadOp::kMax;
        rows.resize(rows_);
        for (int64_t i = 0; i < rows_; ++i) {
          float acc = combinatorInit(comb);
          for (int64_t j = 0; j < cols_; ++j)
            acc = applyPayloadOp(op, 0, acc, at(*e.args[0], i, j));
          rows[i] = acc;
        }
      }
      return rows[r];
    }
    }
    throw std::logic_error("unhandled expression");
  }

  const KernelAst &ast_;
  std::map<std::string, float> consts_;
  std::vector<int64_t> shape_;
  int64_t rows_ = 1, cols_ = 1;
  std::map<std::string, Value> values_;
  std::map<const Expr *, std::vector<float>> reduced_;
};

} // namespace

TensorMap evalAst(const KernelAst &ast, const TensorMap &inputs,
                  const LowerOptions &opts) {
  return AstEvaluator(ast, inputs, opts).run();
}

TensorMap randomInputs(const KernelProgram &p, uint64_t seed, float lo,
                       float hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  TensorMap in;
  for (TensorId id : p.inputs) {
    const TensorDecl &d = p.tensor(id);
    TensorValue t(d.shape);
    for (float &v : t.data)
      v = dist(rng);
    in.emplace(d.name, std::move(t));
  }
  return in;
}

//===----------------------------------------------------------------------===//
// Random programs
//===----------------------------------------------------------------------===//

namespace {

class SourceGenerator {
public:
  explicit SourceGenerator(uint64_t seed) : rng_(seed) {}

  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }
  bool chance(double p) {
    return std::uniform_real_distribution<double>(0, 1)(rng_) < p;
  }

  std::string constant() {
    static const char *kConsts[] = {"0.5", "1.5", "2.0", "0.25", "3.0"};
    return kConsts[pick(5)];
  }

  /// A bounded expression that uses `must` at least once.
  std::string expr(const std::string &must,
                   const std::vector<std::string> &pool, int depth) {
    if (depth == 0)
      return must;
    std::string a = expr(must, pool, depth - 1);
    std::string b =
        chance(0.5) ? pool[pick(static_cast<int>(pool.size()))] : constant();
    switch (pick(10)) {
    case 0:
      return "(" + a + " + " + b + ")";
    case 1:
      return "(" + a + " - " + b + ")";
    case 2:
      return "(" + a + " * " + b + ")";
    case 3:
      return "(" + a + " / (1.5 + tanh(" + b + ")))";
    case 4:
      return "max(" + a + ", " + b + ")";
    case 5:
      return "-" + a;
    case 6:
      return "exp(tanh(" + a + "))";
    case 7:
      return "tanh(" + a + ")";
    case 8:
      return "sqrt(" + a + " * " + a + " + 1.0)";
    default:
      return "rsqrt(" + a + " * " + a + " + 1.0)";
    }
  }

private:
  std::mt19937_64 rng_;
};

} // namespace

RandomProgram genRandomProgram(const RandomProgramSpec &spec) {
  if (spec.length < 1 || spec.length > 5)
    throw std::invalid_argument("random program length must be in [1, 5]");
  static const std::vector<std::vector<int64_t>> kShapes = {
      {16}, {8, 16}, {127, 513}};
  SourceGenerator gen(spec.seed);
  RandomProgram r;
  r.lower.shape = spec.shape.empty() ? kShapes[gen.pick(3)] : spec.shape;

  std::string src =
      "kernel rand" + std::to_string(spec.seed) + "(x: in, w: in, y: out) {\n";
  std::vector<std::string> pool = {"x", "w"};
  std::string last = "x";
  bool reduced = false;
  for (int i = 0; i < spec.length; ++i) {
    std::string name = "t" + std::to_string(i);
    if (i > 0 && !reduced && gen.chance(spec.reduction_probability)) {
      const char *fn = gen.pick(2) ? "sum" : "max";
      src += "  " + name + " = " + fn + "(" + last + ", axis=0);\n";
      reduced = true;
    } else {
      src +=
          "  " + name + " = " + gen.expr(last, pool, 1 + gen.pick(2)) + ";\n";
    }
    pool.push_back(name);
    last = name;
  }
  src += "  store(y, " + last + ");\n}\n";
  r.source = src;
  r.ast = parseKernel(src);
  r.program = lowerToGenerics(r.ast, r.lower);
  return r;
}

//===----------------------------------------------------------------------===//
// Structural scanners
//===----------------------------------------------------------------------===//

namespace {

struct Window {
  TensorId tensor = -1;
  std::vector<int64_t> off, size;

  bool empty() const {
    return std::any_of(size.begin(), size.end(),
                       [](int64_t s) { return s <= 0; });
  }
};

Window window(const View &v, const std::vector<int64_t> &vars) {
  Window w;
  w.tensor = v.tensor;
  for (const IntExpr &e : v.offsets)
    w.off.push_back(e.eval(vars));
  for (const IntExpr &e : v.sizes)
    w.size.push_back(e.eval(vars));
  return w;
}

Window intersect(const Window &a, const Window &b) {
  Window r;
  r.tensor = a.tensor;
  for (size_t i = 0; i < a.off.size(); ++i) {
    int64_t lo = std::max(a.off[i], b.off[i]);
    int64_t hi = std::min(a.off[i] + a.size[i], b.off[i] + b.size[i]);
    r.off.push_back(lo);
    r.size.push_back(std::max<int64_t>(0, hi - lo));
  }
  return r;
}

bool overlaps(const Window &a, const Window &b) {
  return a.tensor == b.tensor && a.off.size() == b.off.size() &&
         !intersect(a, b).empty();
}

/// Executes the control structure of a program with concrete values.
class ScheduleWalker {
public:
  explicit ScheduleWalker(const KernelProgram &p) : p_(p) {}
  virtual ~ScheduleWalker() = default;

  void run() {
    std::vector<int64_t> vars(p_.num_vars, 0);
    block(p_.body, vars);
  }

protected:
  virtual void onGeneric(const Op &, const std::vector<int64_t> &) {}
  virtual void onTransfer(const Op &, const View &, const View &,
                          const std::vector<int64_t> &) {}
  virtual void onAsync(const Op &op, std::vector<int64_t> &vars) {
    std::vector<int64_t> local = vars;
    block(op.as<AsyncExecuteOp>().body, local);
  }
  virtual void onGroupOp(const Op &) {}

  void block(const Block &b, std::vector<int64_t> &vars) {
    for (const Op &op : b)
      step(op, vars);
  }

  const KernelProgram &p_;

private:
  void step(const Op &op, std::vector<int64_t> &vars) {
    switch (op.kind()) {
    case OpKind::kGeneric:
      onGeneric(op, vars);
      return;
    case OpKind::kFor: {
      const auto &f = op.as<ForOp>();
      int64_t n = f.upper.eval(vars);
      for (int64_t i = 0; i < n; ++i) {
        vars[f.iv] = i;
        block(f.body, vars);
      }
      return;
    }
    case OpKind::kForall: {
      const auto &f = op.as<ForallOp>();
      for (int64_t t = 0; t < f.num_threads; ++t) {
        vars[f.thread] = t;
        block(f.body, vars);
      }
      return;
    }
    case OpKind::kIf: {
      const Condition &c = op.as<IfOp>().cond;
      int64_t l = c.lhs.eval(vars), r = c.rhs.eval(vars);
      bool taken = c.cmp == CmpKind::kLt   ? l < r
                   : c.cmp == CmpKind::kEq ? l == r
                                           : l != r;
      if (taken)
        block(op.as<IfOp>().body, vars);
      return;
    }
    case OpKind::kCopy:
      onTransfer(op, op.as<CopyOp>().src, op.as<CopyOp>().dst, vars);
      return;
    case OpKind::kDmaStart:
      onTransfer(op, op.as<DmaStartOp>().src, op.as<DmaStartOp>().dst, vars);
      return;
    case OpKind::kAsyncExecute:
      onAsync(op, vars);
      return;
    case OpKind::kAsyncGroup:
    case OpKind::kAddToGroup:
    case OpKind::kAwaitAll:
      onGroupOp(op);
      return;
    case OpKind::kStoreToggle: {
      const auto &s = op.as<StoreToggleOp>();
      cells_[s.cell] = s.value.eval(vars);
      return;
    }
    case OpKind::kLoadToggle: {
      const auto &l = op.as<LoadToggleOp>();
      vars[l.dest] = cells_[l.cell];
      return;
    }
    default:
      return;
    }
  }

  std::map<CellId, int64_t> cells_;
};

class CoverageWalker : public ScheduleWalker {
public:
  CoverageWalker(const KernelProgram &p, OpId target)
      : ScheduleWalker(p), target_(target) {}

  CoverageReport report() {
    run();
    CoverageReport r;
    r.executions = executions_;
    for (const auto &[t, counts] : counts_)
      for (int c : counts) {
        r.uncovered += c == 0;
        r.overlapping += c > 1;
      }
    for (const auto &[buf, pending] : pending_)
      for (const Window &w : pending)
        if (!w.empty())
          ++r.uncovered; // computed but never drained
    return r;
  }

protected:
  void onGeneric(const Op &op, const std::vector<int64_t> &vars) override {
    if (op.id != target_)
      return;
    ++executions_;
    for (const View &v : op.as<GenericOp>().outputs) {
      Window w = window(v, vars);
      if (p_.tensor(w.tensor).space == MemorySpace::kDDR)
        count(w);
      else
        pending_[w.tensor].push_back(w);
    }
  }

  void onTransfer(const Op &, const View &src, const View &dst,
                  const std::vector<int64_t> &vars) override {
    auto it = pending_.find(src.tensor);
    if (it == pending_.end())
      return;
    Window s = window(src, vars), d = window(dst, vars);
    std::vector<Window> keep;
    for (const Window &l : it->second) {
      Window part = intersect(l, s);
      if (!part.empty()) {
        Window g{d.tensor, {}, part.size};
        for (size_t i = 0; i < part.off.size(); ++i)
          g.off.push_back(d.off[i] + part.off[i] - s.off[i]);
        if (p_.tensor(g.tensor).space == MemorySpace::kDDR)
          count(g);
        else
          pending_[g.tensor].push_back(g);
      }
      if (intersect(l, s).size != l.size)
        keep.push_back(l);
    }
    pending_[src.tensor] = std::move(keep);
  }

private:
  void count(const Window &w) {
    const TensorDecl &d = p_.tensor(w.tensor);
    auto &c = counts_[w.tensor];
    if (c.empty())
      c.assign(d.numElements(), 0);
    // Row-major enumeration of the window.
    std::vector<int64_t> idx(w.size.size(), 0);
    if (w.empty())
      return;
    while (true) {
      int64_t flat = 0;
      for (size_t i = 0; i < idx.size(); ++i)
        flat = flat * d.shape[i] + w.off[i] + idx[i];
      ++c[flat];
      size_t k = idx.size();
      while (k > 0 && ++idx[k - 1] == w.size[k - 1])
        idx[--k] = 0;
      if (k == 0)
        break;
    }
  }

  OpId target_;
  int64_t executions_ = 0;
  std::map<TensorId, std::vector<Window>> pending_;
  std::map<TensorId, std::vector<int>> counts_;
};

struct Footprint {
  std::vector<Window> reads, writes;
};

class ForkJoinWalker : public ScheduleWalker {
public:
  explicit ForkJoinWalker(const KernelProgram &p) : ScheduleWalker(p) {}

  ForkJoinReport report() {
    run();
    for (const auto &[g, members] : open_)
      if (!members.empty())
        issue("group " + std::to_string(g) + " never awaited");
    return std::move(r_);
  }

protected:
  void onGeneric(const Op &op, const std::vector<int64_t> &vars) override {
    if (!current_)
      return;
    const auto &g = op.as<GenericOp>();
    for (const View &v : g.inputs)
      current_->reads.push_back(window(v, vars));
    for (const View &v : g.outputs)
      current_->writes.push_back(window(v, vars));
  }

  void onTransfer(const Op &, const View &src, const View &dst,
                  const std::vector<int64_t> &vars) override {
    if (!current_)
      return;
    current_->reads.push_back(window(src, vars));
    current_->writes.push_back(window(dst, vars));
  }

  void onAsync(const Op &op, std::vector<int64_t> &vars) override {
    Footprint fp;
    Footprint *outer = current_;
    current_ = &fp;
    ScheduleWalker::onAsync(op, vars);
    current_ = outer;
    tokens_[op.as<AsyncExecuteOp>().token] = std::move(fp);
  }

  void onGroupOp(const Op &op) override {
    if (auto *g = op.getIf<AsyncGroupOp>()) {
      if (!open_[g->group].empty())
        issue("group " + std::to_string(g->group) + " reused before await");
      open_[g->group].clear();
    } else if (auto *a = op.getIf<AddToGroupOp>()) {
      auto it = tokens_.find(a->token);
      if (it == tokens_.end()) {
        issue("token " + std::to_string(a->token) + " added before execute");
        return;
      }
      open_[a->group].push_back(std::move(it->second));
      tokens_.erase(it);
    } else if (auto *w = op.getIf<AwaitAllOp>()) {
      check(w->group, open_[w->group]);
      open_[w->group].clear();
      ++r_.groups;
    }
  }

private:
  void issue(std::string s) { r_.issues.push_back(std::move(s)); }

  void check(GroupId g, const std::vector<Footprint> &members) {
    for (size_t i = 0; i < members.size(); ++i)
      for (size_t j = 0; j < members.size(); ++j) {
        if (i == j)
          continue;
        for (const Window &w : members[i].writes) {
          bool clash = std::any_of(
              members[j].writes.begin(), members[j].writes.end(),
              [&](const Window &o) { return i < j && overlaps(w, o); });
          bool race =
              std::any_of(members[j].reads.begin(), members[j].reads.end(),
                          [&](const Window &o) { return overlaps(w, o); });
          if (clash || race) {
            issue("group " + std::to_string(g) + ": bodies " +
                  std::to_string(i) + " and " + std::to_string(j) +
                  (clash ? " write the same window of %"
                         : " race on a window of %") +
                  p_.tensor(w.tensor).name);
            return;
          }
        }
      }
  }

  Footprint *current_ = nullptr;
  std::map<TokenId, Footprint> tokens_;
  std::map<GroupId, std::vector<Footprint>> open_;
  ForkJoinReport r_;
};

} // namespace

CoverageReport tileCoverage(const KernelProgram &p, OpId op) {
  return CoverageWalker(p, op).report();
}

ForkJoinReport scanForkJoin(const KernelProgram &p) {
  return ForkJoinWalker(p).report();
}

} // namespace tcmc::oracle
