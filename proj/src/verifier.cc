//===- verifier.cc - Structural IR verifier -------------------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/ir.h"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace tcmc {

bool VerifyReport::has(std::string_view rule) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation &v) { return v.rule == rule; });
}

std::string VerifyReport::str() const {
  if (ok())
    return "ok\n";
  std::ostringstream os;
  for (const auto &v : violations) {
    if (v.op >= 0)
      os << "op #" << v.op << ": ";
    os << v.rule;
    if (!v.detail.empty())
      os << ": " << v.detail;
    os << "\n";
  }
  return os.str();
}

namespace {

class Verifier {
public:
  Verifier(const KernelProgram &p, const VerifyOptions &opts)
      : p_(p), opts_(opts) {}

  VerifyReport run() {
    checkDecls();
    checkBlock(p_.body);
    checkTokens();
    checkTags();
    if (opts_.tcm_bytes) {
      int64_t peak = peakTcmBytes(p_);
      if (peak > *opts_.tcm_bytes)
        fail(-1, "tcm budget",
             std::to_string(peak) + " bytes live > " +
                 std::to_string(*opts_.tcm_bytes));
    }
    return std::move(report_);
  }

private:
  void fail(OpId op, std::string rule, std::string detail = {}) {
    report_.violations.push_back({op, std::move(rule), std::move(detail)});
  }

  void checkDecls() {
    std::set<std::string> names;
    for (const auto &t : p_.tensors) {
      if (!names.insert(t.name).second)
        fail(-1, "duplicate tensor", t.name);
      if (t.shape.empty())
        fail(-1, "tensor rank", t.name);
      for (int64_t e : t.shape)
        if (e < 1)
          fail(-1, "tensor extent", t.name);
    }
    for (TensorId id : p_.inputs)
      if (!p_.hasTensor(id))
        fail(-1, "unknown tensor", "input " + std::to_string(id));
    for (TensorId id : p_.outputs)
      if (!p_.hasTensor(id))
        fail(-1, "unknown tensor", "output " + std::to_string(id));
  }

  bool checkView(OpId op, const View &v) {
    if (!p_.hasTensor(v.tensor)) {
      fail(op, "unknown tensor", std::to_string(v.tensor));
      return false;
    }
    const TensorDecl &t = p_.tensor(v.tensor);
    if (v.offsets.size() != t.shape.size() ||
        v.sizes.size() != t.shape.size()) {
      fail(op, "view rank", t.name);
      return false;
    }
    for (size_t i = 0; i < t.shape.size(); ++i) {
      auto off = v.offsets[i].as_constant();
      auto size = v.sizes[i].as_constant();
      if ((off && *off < 0) || (size && *size < 0) ||
          (off && size && *off + *size > t.shape[i]))
        fail(op, "view bounds", t.name + " dim " + std::to_string(i));
    }
    return true;
  }

  void checkMap(OpId op, const GenericOp &g, const View &v, const IndexMap &m,
                bool is_output) {
    if (static_cast<int>(m.results.size()) != v.rank()) {
      fail(op, "map rank", p_.tensor(v.tensor).name);
      return;
    }
    std::set<int> seen;
    for (size_t i = 0; i < m.results.size(); ++i) {
      auto size = v.sizes[i].as_constant();
      if (!m.results[i]) {
        if (size && *size != 1)
          fail(op, "map bounds",
               "broadcast dim of size " + std::to_string(*size));
        continue;
      }
      int d = *m.results[i];
      if (d < 0 || d >= g.rank()) {
        fail(op, "map bounds", "result d" + std::to_string(d));
        continue;
      }
      if (!seen.insert(d).second)
        fail(op, "map repeats", "d" + std::to_string(d));
      if (is_output && g.iterators[d] == IteratorKind::kReduction)
        fail(op, "reduction escapes", "d" + std::to_string(d));
      if (size && g.max_extents[d] > *size)
        fail(op, "map bounds",
             "extent " + std::to_string(g.max_extents[d]) + " exceeds " +
                 std::to_string(*size));
    }
    if (is_output) {
      for (int d = 0; d < g.rank(); ++d)
        if (g.iterators[d] == IteratorKind::kParallel && !seen.count(d))
          fail(op, "output map coverage", "d" + std::to_string(d));
    }
  }

  void checkGeneric(const Op &op, const GenericOp &g) {
    if (g.max_extents.size() != g.extents.size() ||
        g.iterators.size() != g.extents.size()) {
      fail(op.id, "domain rank");
      return;
    }
    if (g.rank() < 1)
      fail(op.id, "domain rank", "empty domain");
    for (int d = 0; d < g.rank(); ++d) {
      auto c = g.extents[d].as_constant();
      if (g.max_extents[d] < 1 || (c && (*c < 1 || *c > g.max_extents[d])))
        fail(op.id, "domain extent", "d" + std::to_string(d));
    }
    if (g.inputs.size() != g.input_maps.size() ||
        g.outputs.size() != g.output_maps.size()) {
      fail(op.id, "operand/map arity",
           std::to_string(g.inputs.size() + g.outputs.size()) + " operands, " +
               std::to_string(g.input_maps.size() + g.output_maps.size()) +
               " maps");
      return;
    }
    if (g.payloads.size() != g.outputs.size() ||
        g.combinators.size() != g.outputs.size()) {
      fail(op.id, "payload arity");
      return;
    }
    if (g.outputs.empty())
      fail(op.id, "payload arity", "no outputs");
    if (g.vector_width < 1)
      fail(op.id, "vector width");

    for (size_t i = 0; i < g.inputs.size(); ++i)
      if (checkView(op.id, g.inputs[i]))
        checkMap(op.id, g, g.inputs[i], g.input_maps[i], false);
    for (size_t i = 0; i < g.outputs.size(); ++i)
      if (checkView(op.id, g.outputs[i]))
        checkMap(op.id, g, g.outputs[i], g.output_maps[i], true);

    const int num_in = static_cast<int>(g.inputs.size());
    for (size_t i = 0; i < g.payloads.size(); ++i) {
      bool reduces = g.combinators[i] != Combinator::kNone;
      int limit = num_in + (reduces ? 1 : 0);
      if (g.payloads[i].max_arg() >= limit)
        fail(op.id, "payload arity",
             "arg" + std::to_string(g.payloads[i].max_arg()) + " of " +
                 std::to_string(limit));
      if (reduces != g.hasReduction())
        fail(op.id, "combinator", "output " + std::to_string(i));
    }
  }

  void checkBlock(const Block &b) {
    std::map<TensorId, int> open;
    for (const Op &op : b) {
      switch (op.kind()) {
      case OpKind::kGeneric:
        checkGeneric(op, op.as<GenericOp>());
        break;
      case OpKind::kCopy: {
        const auto &c = op.as<CopyOp>();
        if (checkView(op.id, c.src) && checkView(op.id, c.dst))
          checkSameSizes(op.id, c.src, c.dst);
        break;
      }
      case OpKind::kDmaStart: {
        const auto &d = op.as<DmaStartOp>();
        if (checkView(op.id, d.src) && checkView(op.id, d.dst))
          checkSameSizes(op.id, d.src, d.dst);
        ++tag_starts_[d.tag];
        break;
      }
      case OpKind::kDmaWait:
        ++tag_waits_[op.as<DmaWaitOp>().tag];
        break;
      case OpKind::kTagAlloc:
        ++tag_allocs_[op.as<TagAllocOp>().tag];
        break;
      case OpKind::kTagDealloc:
        ++tag_deallocs_[op.as<TagDeallocOp>().tag];
        break;
      case OpKind::kAlloc: {
        TensorId t = op.as<AllocOp>().buffer;
        if (!p_.hasTensor(t))
          fail(op.id, "unknown tensor", std::to_string(t));
        else if (p_.tensor(t).space != MemorySpace::kTCM)
          fail(op.id, "alloc space", p_.tensor(t).name);
        if (open[t]++ > 0)
          fail(op.id, "alloc/dealloc balance", "double alloc");
        break;
      }
      case OpKind::kDealloc: {
        TensorId t = op.as<DeallocOp>().buffer;
        if (open[t]-- != 1)
          fail(op.id, "alloc/dealloc balance", "dealloc without alloc");
        break;
      }
      case OpKind::kForall:
        if (op.as<ForallOp>().num_threads < 1)
          fail(op.id, "forall threads");
        break;
      case OpKind::kAsyncGroup:
        groups_.insert(op.as<AsyncGroupOp>().group);
        break;
      case OpKind::kAsyncExecute:
        ++token_defs_[op.as<AsyncExecuteOp>().token];
        break;
      case OpKind::kAddToGroup: {
        const auto &a = op.as<AddToGroupOp>();
        ++token_adds_[a.token];
        if (!groups_.count(a.group))
          fail(op.id, "token discipline", "group not created");
        break;
      }
      case OpKind::kAwaitAll:
        ++group_awaits_[op.as<AwaitAllOp>().group];
        break;
      default:
        break;
      }
      if (const Block *body = op.body())
        checkBlock(*body);
    }
    for (const auto &[t, n] : open)
      if (n != 0)
        fail(-1, "alloc/dealloc balance",
             p_.hasTensor(t) ? p_.tensor(t).name : std::to_string(t));
  }

  void checkSameSizes(OpId op, const View &a, const View &b) {
    if (a.rank() != b.rank()) {
      fail(op, "copy shape", "rank mismatch");
      return;
    }
    for (int i = 0; i < a.rank(); ++i) {
      auto x = a.sizes[i].as_constant(), y = b.sizes[i].as_constant();
      if (x && y && *x != *y)
        fail(op, "copy shape", "dim " + std::to_string(i));
    }
  }

  void checkTokens() {
    for (const auto &[tok, n] : token_defs_) {
      if (n != 1)
        fail(-1, "token discipline",
             "token " + std::to_string(tok) + " defined twice");
      if (token_adds_[tok] != 1)
        fail(-1, "token discipline",
             "token " + std::to_string(tok) + " not in exactly one group");
    }
    for (GroupId g : groups_)
      if (group_awaits_[g] != 1)
        fail(-1, "token discipline",
             "group " + std::to_string(g) + " not awaited exactly once");
  }

  void checkTags() {
    std::set<TagId> tags;
    for (const auto &m : {tag_starts_, tag_waits_, tag_allocs_, tag_deallocs_})
      for (const auto &[t, n] : m)
        tags.insert(t);
    for (TagId t : tags) {
      std::string name = "tag " + std::to_string(t);
      if (tag_allocs_[t] != 1 || tag_deallocs_[t] != 1)
        fail(-1, "tag balance", name);
      if ((tag_starts_[t] == 0) != (tag_waits_[t] == 0))
        fail(-1, "tag balance", name + " start/wait mismatch");
    }
  }

  const KernelProgram &p_;
  const VerifyOptions &opts_;
  VerifyReport report_;
  std::map<TagId, int> tag_starts_, tag_waits_, tag_allocs_, tag_deallocs_;
  std::map<TokenId, int> token_defs_, token_adds_;
  std::map<GroupId, int> group_awaits_;
  std::set<GroupId> groups_;
};

int64_t blockPeak(const KernelProgram &p, const Block &b) {
  int64_t live = 0, peak = 0;
  for (const Op &op : b) {
    if (auto *a = op.getIf<AllocOp>()) {
      live += p.tensor(a->buffer).bytes();
    } else if (auto *d = op.getIf<DeallocOp>()) {
      live -= p.tensor(d->buffer).bytes();
    } else if (const Block *body = op.body()) {
      int64_t inner = blockPeak(p, *body);
      if (auto *f = op.getIf<ForallOp>())
        inner *= f->num_threads;
      peak = std::max(peak, live + inner);
    }
    peak = std::max(peak, live);
  }
  return peak;
}

} // namespace

VerifyReport verify(const KernelProgram &p, const VerifyOptions &opts) {
  return Verifier(p, opts).run();
}

int64_t peakTcmBytes(const KernelProgram &p) { return blockPeak(p, p.body); }

} // namespace tcmc
