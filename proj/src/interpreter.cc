//===- interpreter.cc - Reference interpreter -----------------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/interpreter.h"

#include <cmath>
#include <cstring>
#include <future>
#include <limits>
#include <mutex>
#include <set>

namespace tcmc {

TensorValue::TensorValue(std::vector<int64_t> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (static_cast<int64_t>(data.size()) != numElements())
    throw std::invalid_argument("tensor data does not match its shape");
}

TensorValue::TensorValue(std::vector<int64_t> s, float fill)
    : shape(std::move(s)) {
  data.assign(numElements(), fill);
}

int64_t TensorValue::numElements() const {
  int64_t n = 1;
  for (int64_t e : shape)
    n *= e;
  return n;
}

ExecutionFault::ExecutionFault(OpId op, const std::string &msg)
    : std::runtime_error("op #" + std::to_string(op) + ": " + msg), op_(op) {}

int64_t ExecTrace::count(OpKind k) const {
  auto it = op_counts.find(opKindName(k));
  return it == op_counts.end() ? 0 : it->second;
}

int64_t ExecTrace::annotated(const std::string &a) const {
  auto it = annotation_counts.find(a);
  return it == annotation_counts.end() ? 0 : it->second;
}

namespace {

struct Buffer {
  std::vector<float> data;
  bool live = false;
  int pending_dst = 0; // in-flight DMAs writing this buffer
  int pending_src = 0; // in-flight DMAs reading this buffer
};

/// A view with its offsets and sizes evaluated.
struct Window {
  Buffer *buf = nullptr;
  const TensorDecl *decl = nullptr;
  std::vector<int64_t> off, size, stride;

  int64_t base() const {
    int64_t b = 0;
    for (size_t i = 0; i < off.size(); ++i)
      b += off[i] * stride[i];
    return b;
  }
};

struct InFlight {
  Window src, dst;
  OpId op = -1;
};

struct Frame {
  std::vector<int64_t> vars;
};

class Interpreter {
public:
  Interpreter(const KernelProgram &p, const ExecOptions &opts)
      : p_(p), opts_(opts), bufs_(p.next_tensor_id), cells_(p.num_cells, 0) {}

  TensorMap run(const TensorMap &inputs) {
    for (const TensorDecl &t : p_.tensors) {
      if (t.space == MemorySpace::kDDR) {
        bufs_[t.id].data.assign(t.numElements(), 0.0f);
        bufs_[t.id].live = true;
      }
    }
    for (TensorId id : p_.inputs) {
      const TensorDecl &t = p_.tensor(id);
      auto it = inputs.find(t.name);
      if (it == inputs.end())
        throw std::invalid_argument("missing input '" + t.name + "'");
      if (it->second.shape != t.shape)
        throw std::invalid_argument("shape mismatch for input '" + t.name +
                                    "'");
      bufs_[id].data = it->second.data;
    }

    Frame frame;
    frame.vars.assign(p_.num_vars, 0);
    execBlock(p_.body, frame);

    if (!in_flight_.empty())
      throw ExecutionFault(in_flight_.begin()->second.op,
                           "dma on tag " +
                               std::to_string(in_flight_.begin()->first) +
                               " never waited");

    TensorMap out;
    for (TensorId id : p_.outputs) {
      const TensorDecl &t = p_.tensor(id);
      out[t.name] = TensorValue(t.shape, bufs_[id].data);
    }
    return out;
  }

private:
  void record(const Op &op, int tag = -1) {
    if (!opts_.trace)
      return;
    std::lock_guard<std::mutex> lock(trace_mu_);
    ExecTrace &tr = *opts_.trace;
    ++tr.op_counts[opKindName(op.kind())];
    for (const auto &a : op.annotations)
      ++tr.annotation_counts[a];
    if (op.hasAnnotation("db_ping_kernel"))
      tr.subkernels.push_back("ping");
    if (op.hasAnnotation("db_pong_kernel"))
      tr.subkernels.push_back("pong");
    if (tr.record_events && op.kind() != OpKind::kIf)
      tr.events.push_back({op.kind(), op.id, tag});
  }

  Window resolve(const Op &op, const View &v, const Frame &f) {
    Window w;
    if (v.tensor < 0 || v.tensor >= static_cast<int>(bufs_.size()))
      throw ExecutionFault(op.id, "unknown tensor");
    w.decl = &p_.tensor(v.tensor);
    w.buf = &bufs_[v.tensor];
    if (!w.buf->live)
      throw ExecutionFault(op.id,
                           "access to unallocated buffer %" + w.decl->name);
    const auto &shape = w.decl->shape;
    const size_t rank = shape.size();
    w.off.resize(rank);
    w.size.resize(rank);
    w.stride.resize(rank);
    int64_t s = 1;
    for (size_t i = rank; i-- > 0;) {
      w.stride[i] = s;
      s *= shape[i];
    }
    for (size_t i = 0; i < rank; ++i) {
      w.off[i] = v.offsets[i].eval(f.vars);
      w.size[i] = v.sizes[i].eval(f.vars);
      if (w.off[i] < 0 || w.size[i] < 0 || w.off[i] + w.size[i] > shape[i])
        throw ExecutionFault(op.id, "out-of-bounds slice of %" + w.decl->name);
    }
    return w;
  }

  void checkReadable(const Op &op, const Window &w) {
    if (w.buf->pending_dst)
      throw ExecutionFault(op.id,
                           "read of %" + w.decl->name + " before its dma_wait");
  }

  void checkWritable(const Op &op, const Window &w) {
    if (w.buf->pending_dst || w.buf->pending_src)
      throw ExecutionFault(op.id, "write to %" + w.decl->name +
                                      " while a dma is in flight");
  }

  static void copyWindow(const Op &op, const Window &src, const Window &dst) {
    if (src.size != dst.size)
      throw ExecutionFault(op.id, "copy between windows of different shape");
    const size_t rank = src.size.size();
    for (int64_t e : src.size)
      if (e == 0)
        return;
    std::vector<int64_t> idx(rank, 0);
    const int64_t inner = src.size[rank - 1];
    const float *sdata = src.buf->data.data();
    float *ddata = dst.buf->data.data();
    while (true) {
      int64_t sa = src.base(), da = dst.base();
      for (size_t i = 0; i + 1 < rank; ++i) {
        sa += idx[i] * src.stride[i];
        da += idx[i] * dst.stride[i];
      }
      std::memcpy(ddata + da, sdata + sa, inner * sizeof(float));
      size_t d = rank - 1;
      while (d-- > 0) {
        if (++idx[d] < src.size[d])
          break;
        idx[d] = 0;
      }
      if (d == static_cast<size_t>(-1))
        return;
    }
  }

  void runGeneric(const Op &op, const GenericOp &g, const Frame &f) {
    const int rank = g.rank();
    std::vector<int64_t> ext(rank);
    for (int d = 0; d < rank; ++d) {
      ext[d] = g.extents[d].eval(f.vars);
      if (ext[d] < 0 || ext[d] > g.max_extents[d])
        throw ExecutionFault(op.id, "domain extent out of range");
    }
    for (int64_t e : ext)
      if (e == 0)
        return;

    const size_t num_in = g.inputs.size();
    const size_t num_ops = num_in + g.outputs.size();
    std::vector<float *> base(num_ops);
    std::vector<std::vector<int64_t>> dstride(num_ops,
                                              std::vector<int64_t>(rank, 0));
    auto bind = [&](size_t k, const View &v, const IndexMap &m, bool out) {
      Window w = resolve(op, v, f);
      if (out)
        checkWritable(op, w);
      else
        checkReadable(op, w);
      base[k] = w.buf->data.data() + w.base();
      for (size_t i = 0; i < m.results.size(); ++i) {
        if (!m.results[i]) {
          if (w.size[i] < 1)
            throw ExecutionFault(op.id, "empty broadcast dimension");
          continue;
        }
        int d = *m.results[i];
        if (ext[d] > w.size[i])
          throw ExecutionFault(op.id,
                               "domain exceeds operand %" + w.decl->name);
        dstride[k][d] += w.stride[i];
      }
    };
    for (size_t i = 0; i < num_in; ++i)
      bind(i, g.inputs[i], g.input_maps[i], false);
    for (size_t i = 0; i < g.outputs.size(); ++i)
      bind(num_in + i, g.outputs[i], g.output_maps[i], true);

    std::vector<CompiledPayload> payloads;
    size_t scratch_size = 0;
    for (const Payload &pl : g.payloads) {
      payloads.emplace_back(pl);
      scratch_size = std::max(scratch_size, payloads.back().scratch_size());
    }
    std::vector<float> scratch(scratch_size);
    std::vector<float> args(num_in + 1);
    std::vector<float> results(g.outputs.size());

    std::vector<bool> is_red(rank);
    for (int d = 0; d < rank; ++d)
      is_red[d] = g.iterators[d] == IteratorKind::kReduction;
    const bool reduces = g.hasReduction();

    std::vector<int64_t> idx(rank, 0);
    std::vector<int64_t> addr(num_ops, 0);
    const int last = rank - 1;
    while (true) {
      bool outer_first = true; // all outer reduction coordinates are zero
      if (reduces)
        for (int d = 0; d < last; ++d)
          if (is_red[d] && idx[d] != 0)
            outer_first = false;
      for (int64_t i = 0; i < ext[last]; ++i) {
        for (size_t k = 0; k < num_in; ++k)
          args[k] = base[k][addr[k] + i * dstride[k][last]];
        bool first = outer_first && (!is_red[last] || i == 0);
        for (size_t o = 0; o < g.outputs.size(); ++o) {
          float *out = base[num_in + o] + addr[num_in + o] +
                       i * dstride[num_in + o][last];
          if (g.combinators[o] != Combinator::kNone)
            args[num_in] = first ? combinatorInit(g.combinators[o]) : *out;
          results[o] = payloads[o].run(args.data(), scratch.data());
        }
        for (size_t o = 0; o < g.outputs.size(); ++o)
          *(base[num_in + o] + addr[num_in + o] +
            i * dstride[num_in + o][last]) = results[o];
      }
      int d = last;
      while (d-- > 0) {
        ++idx[d];
        for (size_t k = 0; k < num_ops; ++k)
          addr[k] += dstride[k][d];
        if (idx[d] < ext[d])
          break;
        for (size_t k = 0; k < num_ops; ++k)
          addr[k] -= dstride[k][d] * ext[d];
        idx[d] = 0;
      }
      if (d < 0)
        return;
    }
  }

  void execBlock(const Block &b, Frame &f) {
    for (const Op &op : b)
      exec(op, f);
  }

  void exec(const Op &op, Frame &f) {
    switch (op.kind()) {
    case OpKind::kGeneric:
      record(op);
      runGeneric(op, op.as<GenericOp>(), f);
      return;
    case OpKind::kFor: {
      record(op);
      const auto &fo = op.as<ForOp>();
      int64_t n = fo.upper.eval(f.vars);
      for (int64_t i = 0; i < n; ++i) {
        f.vars[fo.iv] = i;
        execBlock(fo.body, f);
      }
      return;
    }
    case OpKind::kForall:
      record(op);
      execForall(op.as<ForallOp>(), f);
      return;
    case OpKind::kIf: {
      const auto &i = op.as<IfOp>();
      int64_t l = i.cond.lhs.eval(f.vars), r = i.cond.rhs.eval(f.vars);
      bool taken = i.cond.cmp == CmpKind::kLt   ? l < r
                   : i.cond.cmp == CmpKind::kEq ? l == r
                                                : l != r;
      if (taken) {
        record(op);
        execBlock(i.body, f);
      }
      return;
    }
    case OpKind::kCopy: {
      record(op);
      const auto &c = op.as<CopyOp>();
      Window src = resolve(op, c.src, f), dst = resolve(op, c.dst, f);
      checkReadable(op, src);
      checkWritable(op, dst);
      copyWindow(op, src, dst);
      return;
    }
    case OpKind::kAlloc: {
      record(op);
      TensorId id = op.as<AllocOp>().buffer;
      Buffer &buf = bufs_[id];
      if (buf.live)
        throw ExecutionFault(op.id, "buffer allocated twice");
      buf.data.assign(p_.tensor(id).numElements(),
                      std::numeric_limits<float>::quiet_NaN());
      buf.live = true;
      return;
    }
    case OpKind::kDealloc: {
      record(op);
      Buffer &buf = bufs_[op.as<DeallocOp>().buffer];
      if (!buf.live)
        throw ExecutionFault(op.id, "dealloc of unallocated buffer");
      if (buf.pending_dst || buf.pending_src)
        throw ExecutionFault(op.id, "dealloc while a dma is in flight");
      buf.live = false;
      buf.data.clear();
      buf.data.shrink_to_fit();
      return;
    }
    case OpKind::kTagAlloc: {
      record(op);
      TagId t = op.as<TagAllocOp>().tag;
      if (!live_tags_.insert(t).second)
        throw ExecutionFault(op.id, "tag allocated twice");
      return;
    }
    case OpKind::kTagDealloc: {
      record(op);
      TagId t = op.as<TagDeallocOp>().tag;
      if (in_flight_.count(t))
        throw ExecutionFault(op.id, "tag " + std::to_string(t) +
                                        " released with a dma in flight");
      if (!live_tags_.erase(t))
        throw ExecutionFault(op.id, "unbalanced tag " + std::to_string(t));
      return;
    }
    case OpKind::kDmaStart: {
      const auto &d = op.as<DmaStartOp>();
      record(op, d.tag);
      if (!live_tags_.count(d.tag))
        throw ExecutionFault(op.id, "dma_start on unallocated tag " +
                                        std::to_string(d.tag));
      if (in_flight_.count(d.tag))
        throw ExecutionFault(op.id, "tag " + std::to_string(d.tag) +
                                        " already in flight");
      InFlight fl{resolve(op, d.src, f), resolve(op, d.dst, f), op.id};
      checkReadable(op, fl.src);
      checkWritable(op, fl.dst);
      ++fl.src.buf->pending_src;
      ++fl.dst.buf->pending_dst;
      if (opts_.trace) {
        std::lock_guard<std::mutex> lock(trace_mu_);
        ++opts_.trace->dma_starts[d.tag];
      }
      in_flight_.emplace(d.tag, std::move(fl));
      return;
    }
    case OpKind::kDmaWait: {
      TagId t = op.as<DmaWaitOp>().tag;
      record(op, t);
      auto it = in_flight_.find(t);
      if (it == in_flight_.end())
        throw ExecutionFault(op.id, "dma_wait on tag " + std::to_string(t) +
                                        " with no dma in flight");
      InFlight fl = std::move(it->second);
      in_flight_.erase(it);
      --fl.src.buf->pending_src;
      --fl.dst.buf->pending_dst;
      copyWindow(op, fl.src, fl.dst);
      if (opts_.trace) {
        std::lock_guard<std::mutex> lock(trace_mu_);
        ++opts_.trace->dma_waits[t];
      }
      return;
    }
    case OpKind::kAsyncGroup:
      record(op);
      groups_[op.as<AsyncGroupOp>().group].clear();
      return;
    case OpKind::kAsyncExecute: {
      record(op);
      const auto &a = op.as<AsyncExecuteOp>();
      if (opts_.threaded) {
        Frame copy = f;
        tokens_[a.token] = std::async(std::launch::async, [this, &a, copy]() {
          Frame local = copy;
          execBlock(a.body, local);
        });
      } else {
        execBlock(a.body, f);
        std::promise<void> done;
        done.set_value();
        tokens_[a.token] = done.get_future();
      }
      return;
    }
    case OpKind::kAddToGroup: {
      record(op);
      const auto &a = op.as<AddToGroupOp>();
      auto g = groups_.find(a.group);
      if (g == groups_.end())
        throw ExecutionFault(op.id, "add_to_group on unknown group");
      auto t = tokens_.find(a.token);
      if (t == tokens_.end() || !t->second.valid())
        throw ExecutionFault(op.id, "add_to_group of unissued token");
      g->second.push_back(std::move(t->second));
      tokens_.erase(t);
      return;
    }
    case OpKind::kAwaitAll: {
      record(op);
      auto g = groups_.find(op.as<AwaitAllOp>().group);
      if (g == groups_.end())
        throw ExecutionFault(op.id, "await_all on unknown group");
      std::exception_ptr first;
      for (auto &fut : g->second) {
        try {
          fut.get();
        } catch (...) {
          if (!first)
            first = std::current_exception();
        }
      }
      groups_.erase(g);
      if (first)
        std::rethrow_exception(first);
      return;
    }
    case OpKind::kStoreToggle: {
      record(op);
      const auto &s = op.as<StoreToggleOp>();
      cells_.at(s.cell) = s.value.eval(f.vars);
      return;
    }
    case OpKind::kLoadToggle: {
      record(op);
      const auto &l = op.as<LoadToggleOp>();
      f.vars[l.dest] = cells_.at(l.cell);
      if (opts_.trace) {
        std::lock_guard<std::mutex> lock(trace_mu_);
        opts_.trace->toggle_values.push_back(f.vars[l.dest]);
      }
      return;
    }
    }
  }

  void execForall(const ForallOp &fa, Frame &f) {
    if (!opts_.threaded) {
      for (int64_t t = 0; t < fa.num_threads; ++t) {
        f.vars[fa.thread] = t;
        execBlock(fa.body, f);
      }
      return;
    }
    std::vector<std::future<void>> workers;
    for (int64_t t = 0; t < fa.num_threads; ++t) {
      Frame copy = f;
      copy.vars[fa.thread] = t;
      workers.push_back(std::async(std::launch::async, [this, &fa, copy]() {
        Frame local = copy;
        execBlock(fa.body, local);
      }));
    }
    std::exception_ptr first;
    for (auto &w : workers) {
      try {
        w.get();
      } catch (...) {
        if (!first)
          first = std::current_exception();
      }
    }
    if (first)
      std::rethrow_exception(first);
  }

  const KernelProgram &p_;
  const ExecOptions &opts_;
  std::vector<Buffer> bufs_;
  std::vector<int64_t> cells_;
  std::map<TagId, InFlight> in_flight_;
  std::set<TagId> live_tags_;
  std::map<TokenId, std::future<void>> tokens_;
  std::map<GroupId, std::vector<std::future<void>>> groups_;
  std::mutex trace_mu_;
};

} // namespace

TensorMap interpret(const KernelProgram &p, const TensorMap &inputs,
                    const ExecOptions &opts) {
  return Interpreter(p, opts).run(inputs);
}

} // namespace tcmc
