//===- ir.cc - Kernel program IR and printer ------------------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/ir.h"

#include <algorithm>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace tcmc {

const char *spaceName(MemorySpace s) {
  return s == MemorySpace::kDDR ? "ddr" : "tcm";
}

const char *iteratorName(IteratorKind k) {
  return k == IteratorKind::kParallel ? "parallel" : "reduction";
}

const char *combinatorName(Combinator c) {
  switch (c) {
  case Combinator::kNone:
    return "none";
  case Combinator::kSum:
    return "sum";
  case Combinator::kMax:
    return "max";
  }
  return "?";
}

float combinatorInit(Combinator c) {
  return c == Combinator::kMax ? -std::numeric_limits<float>::infinity() : 0.0f;
}

const char *opKindName(OpKind k) {
  switch (k) {
  case OpKind::kGeneric:
    return "generic";
  case OpKind::kFor:
    return "for";
  case OpKind::kForall:
    return "forall";
  case OpKind::kIf:
    return "if";
  case OpKind::kCopy:
    return "copy";
  case OpKind::kAlloc:
    return "alloc";
  case OpKind::kDealloc:
    return "dealloc";
  case OpKind::kDmaStart:
    return "dma_start";
  case OpKind::kDmaWait:
    return "dma_wait";
  case OpKind::kTagAlloc:
    return "tag_alloc";
  case OpKind::kTagDealloc:
    return "tag_dealloc";
  case OpKind::kAsyncGroup:
    return "async_group";
  case OpKind::kAsyncExecute:
    return "async_execute";
  case OpKind::kAddToGroup:
    return "add_to_group";
  case OpKind::kAwaitAll:
    return "await_all";
  case OpKind::kStoreToggle:
    return "store_toggle";
  case OpKind::kLoadToggle:
    return "load_toggle";
  }
  return "?";
}

int64_t TensorDecl::numElements() const {
  int64_t n = 1;
  for (int64_t e : shape)
    n *= e;
  return n;
}

IndexMap IndexMap::identity(int rank) {
  IndexMap m;
  for (int i = 0; i < rank; ++i)
    m.results.push_back(i);
  return m;
}

bool IndexMap::isIdentity(int domain_rank) const {
  if (static_cast<int>(results.size()) != domain_rank)
    return false;
  for (int i = 0; i < domain_rank; ++i)
    if (results[i] != i)
      return false;
  return true;
}

std::string IndexMap::str(int domain_rank) const {
  std::string s = "(";
  for (int i = 0; i < domain_rank; ++i)
    s += (i ? ", d" : "d") + std::to_string(i);
  s += ") -> (";
  for (size_t i = 0; i < results.size(); ++i) {
    if (i)
      s += ", ";
    s += results[i] ? "d" + std::to_string(*results[i]) : "_";
  }
  return s + ")";
}

View View::whole(const TensorDecl &decl) {
  View v;
  v.tensor = decl.id;
  for (int64_t e : decl.shape) {
    v.offsets.push_back(IntExpr::constant(0));
    v.sizes.push_back(IntExpr::constant(e));
  }
  return v;
}

bool View::isWhole(const TensorDecl &decl) const {
  if (tensor != decl.id || sizes.size() != decl.shape.size())
    return false;
  for (size_t i = 0; i < sizes.size(); ++i)
    if (!offsets[i].is_constant(0) || !sizes[i].is_constant(decl.shape[i]))
      return false;
  return true;
}

bool GenericOp::allParallel() const {
  return std::all_of(iterators.begin(), iterators.end(), [](IteratorKind k) {
    return k == IteratorKind::kParallel;
  });
}

int64_t GenericOp::maxPoints() const {
  int64_t n = 1;
  for (int64_t e : max_extents)
    n *= e;
  return n;
}

std::string Condition::str() const {
  const char *op = cmp == CmpKind::kLt   ? "<"
                   : cmp == CmpKind::kEq ? "=="
                                         : "!=";
  return lhs.str() + " " + op + " " + rhs.str();
}

bool Op::hasAnnotation(std::string_view a) const {
  return std::find(annotations.begin(), annotations.end(), a) !=
         annotations.end();
}

std::optional<std::string> Op::annotationValue(std::string_view key) const {
  for (const auto &a : annotations) {
    if (a.size() > key.size() && a.compare(0, key.size(), key) == 0 &&
        a[key.size()] == '=')
      return a.substr(key.size() + 1);
  }
  return std::nullopt;
}

void Op::annotate(std::string a) {
  if (!hasAnnotation(a))
    annotations.push_back(std::move(a));
}

Block *Op::body() {
  return const_cast<Block *>(static_cast<const Op *>(this)->body());
}

const Block *Op::body() const {
  if (auto *f = getIf<ForOp>())
    return &f->body;
  if (auto *f = getIf<ForallOp>())
    return &f->body;
  if (auto *i = getIf<IfOp>())
    return &i->body;
  if (auto *a = getIf<AsyncExecuteOp>())
    return &a->body;
  return nullptr;
}

const TensorDecl &KernelProgram::tensor(TensorId id) const {
  for (const auto &t : tensors)
    if (t.id == id)
      return t;
  throw std::out_of_range("unknown tensor id " + std::to_string(id));
}

TensorDecl &KernelProgram::tensor(TensorId id) {
  return const_cast<TensorDecl &>(
      static_cast<const KernelProgram *>(this)->tensor(id));
}

std::optional<TensorId> KernelProgram::findTensor(std::string_view n) const {
  for (const auto &t : tensors)
    if (t.name == n)
      return t.id;
  return std::nullopt;
}

bool KernelProgram::hasTensor(TensorId id) const {
  return std::any_of(tensors.begin(), tensors.end(),
                     [&](const TensorDecl &t) { return t.id == id; });
}

std::string KernelProgram::freshName(const std::string &base) const {
  std::string n = base;
  for (int k = 1; findTensor(n); ++k)
    n = base + "_" + std::to_string(k);
  return n;
}

TensorId KernelProgram::addTensor(std::string n, std::vector<int64_t> shape,
                                  MemorySpace space, TensorRole role,
                                  ElementType type) {
  TensorDecl d;
  d.id = next_tensor_id++;
  d.name = std::move(n);
  d.shape = std::move(shape);
  d.space = space;
  d.role = role;
  d.type = type;
  tensors.push_back(std::move(d));
  return tensors.back().id;
}

void KernelProgram::removeTensor(TensorId id) {
  std::erase_if(tensors, [&](const TensorDecl &t) { return t.id == id; });
}

void walk(const Block &block, const std::function<void(const Op &)> &fn) {
  for (const Op &op : block) {
    fn(op);
    if (const Block *b = op.body())
      walk(*b, fn);
  }
}

void walk(Block &block, const std::function<void(Op &)> &fn) {
  for (Op &op : block) {
    fn(op);
    if (Block *b = op.body())
      walk(*b, fn);
  }
}

int64_t countOps(const KernelProgram &p,
                 const std::function<bool(const Op &)> &pred) {
  int64_t n = 0;
  walk(p.body, [&](const Op &op) {
    if (pred(op))
      ++n;
  });
  return n;
}

int64_t countOps(const KernelProgram &p, OpKind kind) {
  return countOps(p, [&](const Op &op) { return op.kind() == kind; });
}

int64_t countAnnotated(const KernelProgram &p, std::string_view annotation) {
  return countOps(p,
                  [&](const Op &op) { return op.hasAnnotation(annotation); });
}

//===----------------------------------------------------------------------===//
// Printer
//===----------------------------------------------------------------------===//

namespace {

class Printer {
public:
  explicit Printer(const KernelProgram &p) : p_(p) {}

  std::string run() {
    os_ << "kernel @" << p_.name << " stage \"" << p_.stage << "\" {\n";
    for (const auto &t : p_.tensors)
      printDecl(t);
    printBlock(p_.body, 1);
    os_ << "}\n";
    return os_.str();
  }

private:
  void indent(int depth) {
    for (int i = 0; i < depth; ++i)
      os_ << "  ";
  }

  std::string name(TensorId id) const { return "%" + p_.tensor(id).name; }

  void printDecl(const TensorDecl &t) {
    indent(1);
    os_ << "%" << t.name << " : tensor<";
    for (int64_t e : t.shape)
      os_ << e << "x";
    os_ << (t.narrow() ? "f16" : "f32") << ", " << spaceName(t.space) << ">";
    switch (t.role) {
    case TensorRole::kInput:
      os_ << " input";
      break;
    case TensorRole::kOutput:
      os_ << " output";
      break;
    case TensorRole::kTemp:
      os_ << " temp";
      break;
    case TensorRole::kBuffer:
      os_ << " buffer";
      break;
    }
    os_ << "\n";
  }

  std::string view(const View &v) const {
    const TensorDecl &t = p_.tensor(v.tensor);
    if (v.isWhole(t))
      return name(v.tensor);
    std::string s = name(v.tensor) + "[";
    for (size_t i = 0; i < v.sizes.size(); ++i) {
      if (i)
        s += ", ";
      s += v.offsets[i].str() + " +: " + v.sizes[i].str();
    }
    return s + "]";
  }

  std::string annotations(const Op &op) const {
    if (op.annotations.empty())
      return "";
    std::vector<std::string> sorted = op.annotations;
    std::sort(sorted.begin(), sorted.end());
    std::string s = " {";
    for (size_t i = 0; i < sorted.size(); ++i)
      s += (i ? ", " : "") + sorted[i];
    return s + "}";
  }

  static std::string var(VarId v) { return "%v" + std::to_string(v); }

  void printBlock(const Block &b, int depth) {
    for (const Op &op : b)
      printOp(op, depth);
  }

  void printNested(const Op &op, const Block &b, int depth) {
    os_ << " {\n";
    printBlock(b, depth + 1);
    indent(depth);
    os_ << "}" << annotations(op) << "\n";
  }

  void printGeneric(const Op &op, const GenericOp &g, int depth) {
    indent(depth);
    os_ << "generic #" << op.id << " domain [";
    for (int i = 0; i < g.rank(); ++i)
      os_ << (i ? ", " : "") << g.extents[i].str();
    os_ << "] iterators [";
    for (int i = 0; i < g.rank(); ++i)
      os_ << (i ? ", " : "") << iteratorName(g.iterators[i]);
    os_ << "]\n";
    indent(depth + 2);
    os_ << "ins(";
    for (size_t i = 0; i < g.inputs.size(); ++i)
      os_ << (i ? ", " : "") << view(g.inputs[i]) << " : "
          << g.input_maps[i].str(g.rank());
    os_ << ")\n";
    indent(depth + 2);
    os_ << "outs(";
    for (size_t i = 0; i < g.outputs.size(); ++i) {
      os_ << (i ? ", " : "") << view(g.outputs[i]) << " : "
          << g.output_maps[i].str(g.rank());
      if (g.combinators[i] != Combinator::kNone)
        os_ << " reduce " << combinatorName(g.combinators[i]);
    }
    os_ << ") {\n";
    for (size_t i = 0; i < g.payloads.size(); ++i) {
      indent(depth + 1);
      os_ << "yield " << g.payloads[i].str() << "\n";
    }
    indent(depth);
    os_ << "}" << annotations(op) << "\n";
  }

  void printOp(const Op &op, int depth) {
    switch (op.kind()) {
    case OpKind::kGeneric:
      printGeneric(op, op.as<GenericOp>(), depth);
      return;
    case OpKind::kFor: {
      const auto &f = op.as<ForOp>();
      indent(depth);
      os_ << "for " << var(f.iv) << " = 0 to " << f.upper.str();
      printNested(op, f.body, depth);
      return;
    }
    case OpKind::kForall: {
      const auto &f = op.as<ForallOp>();
      indent(depth);
      os_ << "forall " << var(f.thread) << " in " << f.num_threads;
      printNested(op, f.body, depth);
      return;
    }
    case OpKind::kIf: {
      const auto &i = op.as<IfOp>();
      indent(depth);
      os_ << "if (" << i.cond.str() << ")";
      printNested(op, i.body, depth);
      return;
    }
    case OpKind::kAsyncExecute: {
      const auto &a = op.as<AsyncExecuteOp>();
      indent(depth);
      os_ << "%token" << a.token << " = async_execute";
      printNested(op, a.body, depth);
      return;
    }
    default:
      break;
    }

    indent(depth);
    switch (op.kind()) {
    case OpKind::kCopy: {
      const auto &c = op.as<CopyOp>();
      os_ << "copy " << view(c.src) << " -> " << view(c.dst);
      break;
    }
    case OpKind::kAlloc:
      os_ << "alloc " << name(op.as<AllocOp>().buffer);
      break;
    case OpKind::kDealloc:
      os_ << "dealloc " << name(op.as<DeallocOp>().buffer);
      break;
    case OpKind::kDmaStart: {
      const auto &d = op.as<DmaStartOp>();
      os_ << "dma_start " << view(d.src) << " -> " << view(d.dst) << " tag %tag"
          << d.tag;
      break;
    }
    case OpKind::kDmaWait:
      os_ << "dma_wait %tag" << op.as<DmaWaitOp>().tag;
      break;
    case OpKind::kTagAlloc:
      os_ << "%tag" << op.as<TagAllocOp>().tag << " = tag_alloc";
      break;
    case OpKind::kTagDealloc:
      os_ << "tag_dealloc %tag" << op.as<TagDeallocOp>().tag;
      break;
    case OpKind::kAsyncGroup: {
      const auto &g = op.as<AsyncGroupOp>();
      os_ << "%group" << g.group << " = async_group " << g.size;
      break;
    }
    case OpKind::kAddToGroup: {
      const auto &a = op.as<AddToGroupOp>();
      os_ << "add_to_group %token" << a.token << ", %group" << a.group;
      break;
    }
    case OpKind::kAwaitAll:
      os_ << "await_all %group" << op.as<AwaitAllOp>().group;
      break;
    case OpKind::kStoreToggle: {
      const auto &s = op.as<StoreToggleOp>();
      os_ << "store_toggle " << s.value.str() << " -> %cell" << s.cell;
      break;
    }
    case OpKind::kLoadToggle: {
      const auto &l = op.as<LoadToggleOp>();
      os_ << var(l.dest) << " = load_toggle %cell" << l.cell;
      break;
    }
    default:
      break;
    }
    os_ << annotations(op) << "\n";
  }

  const KernelProgram &p_;
  std::ostringstream os_;
};

} // namespace

std::string printIR(const KernelProgram &p) { return Printer(p).run(); }

} // namespace tcmc
