//===- double_buffer.cc - Ping-pong staging of tile loops -----------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/double_buffer.h"

#include <algorithm>
#include <map>
#include <set>

namespace tcmc {

namespace {

View substitute(const View &v, VarId iv, const IntExpr &value) {
  View r = v;
  for (IntExpr &e : r.offsets)
    e = e.substitute(iv, value);
  for (IntExpr &e : r.sizes)
    e = e.substitute(iv, value);
  return r;
}

void renameTensor(Block &block, TensorId from, TensorId to) {
  auto fix = [&](View &v) {
    if (v.tensor == from)
      v.tensor = to;
  };
  walk(block, [&](Op &op) {
    if (auto *g = op.getIf<GenericOp>()) {
      std::for_each(g->inputs.begin(), g->inputs.end(), fix);
      std::for_each(g->outputs.begin(), g->outputs.end(), fix);
    } else if (auto *c = op.getIf<CopyOp>()) {
      fix(c->src);
      fix(c->dst);
    } else if (auto *d = op.getIf<DmaStartOp>()) {
      fix(d->src);
      fix(d->dst);
    }
  });
}

/// Gives the async groups and tokens defined in `block` fresh ids so that a
/// duplicated block keeps the one-definition discipline.
void freshenAsync(KernelProgram &p, Block &block) {
  std::map<GroupId, GroupId> groups;
  std::map<TokenId, TokenId> tokens;
  walk(block, [&](Op &op) {
    if (auto *g = op.getIf<AsyncGroupOp>())
      g->group = groups[g->group] = p.newGroup();
    else if (auto *a = op.getIf<AsyncExecuteOp>())
      a->token = tokens[a->token] = p.newToken();
  });
  walk(block, [&](Op &op) {
    if (auto *a = op.getIf<AddToGroupOp>()) {
      a->group = groups.at(a->group);
      a->token = tokens.at(a->token);
    } else if (auto *w = op.getIf<AwaitAllOp>()) {
      w->group = groups.at(w->group);
    }
  });
}

/// The pieces of a tiled loop body.
struct TileLoop {
  std::vector<TensorId> inputs;  // staged buffers, in allocation order
  std::vector<TensorId> outputs; // result buffers, in allocation order
  std::vector<CopyOp> copy_in;   // parallel to `inputs`
  Block compute;
  Block copy_out;
  OpId generic = -1;
};

TileLoop splitTileLoop(const ForOp &loop) {
  TileLoop t;
  std::set<TensorId> local;
  std::map<TensorId, CopyOp> in_copy;
  std::vector<TensorId> order;
  for (const Op &op : loop.body) {
    if (auto *a = op.getIf<AllocOp>()) {
      local.insert(a->buffer);
      order.push_back(a->buffer);
    } else if (auto *c = op.getIf<CopyOp>()) {
      if (local.count(c->dst.tensor))
        in_copy.emplace(c->dst.tensor, *c);
      else if (local.count(c->src.tensor))
        t.copy_out.push_back(op);
      else
        t.compute.push_back(op);
    } else if (op.kind() != OpKind::kDealloc) {
      t.compute.push_back(op);
    }
  }
  for (TensorId b : order) {
    auto it = in_copy.find(b);
    if (it != in_copy.end()) {
      t.inputs.push_back(b);
      t.copy_in.push_back(it->second);
    } else {
      t.outputs.push_back(b);
    }
  }
  walk(t.compute, [&](const Op &op) {
    if (t.generic < 0 && op.kind() == OpKind::kGeneric)
      t.generic = op.id;
  });
  return t;
}

/// Replaces the tiled loop `op` by its double-buffered form, appended to
/// `out`.
void stageLoop(KernelProgram &p, const Op &op, Block &out) {
  const ForOp &loop = op.as<ForOp>();
  TileLoop t = splitTileLoop(loop);
  if (t.generic < 0)
    throw PassError("tiled loop without a generic");
  const std::string gen = "db_generic=" + std::to_string(t.generic);
  const VarId iv = loop.iv;

  std::vector<TensorId> ping, pong;
  for (TensorId b : t.inputs) {
    const TensorDecl decl = p.tensor(b);
    ping.push_back(p.addTensor(p.freshName(decl.name + "_ping"), decl.shape,
                               MemorySpace::kTCM, TensorRole::kBuffer,
                               decl.type));
    pong.push_back(p.addTensor(p.freshName(decl.name + "_pong"), decl.shape,
                               MemorySpace::kTCM, TensorRole::kBuffer,
                               decl.type));
  }

  Block deallocs;
  for (size_t i = 0; i < t.inputs.size(); ++i) {
    out.push_back(p.makeOp(AllocOp{ping[i]}));
    out.push_back(p.makeOp(AllocOp{pong[i]}));
    deallocs.push_back(p.makeOp(DeallocOp{ping[i]}));
    deallocs.push_back(p.makeOp(DeallocOp{pong[i]}));
  }
  for (TensorId b : t.outputs) {
    out.push_back(p.makeOp(AllocOp{b}));
    deallocs.push_back(p.makeOp(DeallocOp{b}));
  }

  const CellId cell = p.newCell();
  out.push_back(p.makeOp(StoreToggleOp{cell, IntExpr::constant(0)}));

  auto fetch = [&](const std::vector<TensorId> &dst, const IntExpr &tile) {
    Block b;
    for (size_t i = 0; i < t.inputs.size(); ++i) {
      View src = substitute(t.copy_in[i].src, iv, tile);
      View to = substitute(t.copy_in[i].dst, iv, tile);
      to.tensor = dst[i];
      b.push_back(p.makeOp(CopyOp{src, to}));
    }
    return b;
  };

  out.push_back(p.makeOp(IfOp{{IntExpr::constant(0), CmpKind::kLt, loop.upper},
                              fetch(ping, IntExpr::constant(0))},
                         {"db_prologue", gen}));

  auto kernel = [&](const std::vector<TensorId> &cur,
                    const std::vector<TensorId> &next, int64_t flip,
                    bool fresh) {
    Block b;
    IntExpr following = IntExpr::var(iv) + 1;
    b.push_back(p.makeOp(
        IfOp{{following, CmpKind::kLt, loop.upper}, fetch(next, following)},
        {"db_prefetch"}));
    Block compute = t.compute;
    for (size_t i = 0; i < t.inputs.size(); ++i)
      renameTensor(compute, t.inputs[i], cur[i]);
    if (fresh)
      freshenAsync(p, compute);
    for (Op &c : compute)
      b.push_back(std::move(c));
    for (const Op &c : t.copy_out)
      b.push_back(p.makeOp(c.as<CopyOp>()));
    b.push_back(p.makeOp(StoreToggleOp{cell, IntExpr::constant(flip)}));
    return b;
  };

  const VarId toggle = p.newVar();
  Block body;
  body.push_back(p.makeOp(LoadToggleOp{cell, toggle}));
  body.push_back(
      p.makeOp(IfOp{{IntExpr::var(toggle), CmpKind::kEq, IntExpr::constant(0)},
                    kernel(ping, pong, 1, false)},
               {"db_ping_kernel"}));
  body.push_back(
      p.makeOp(IfOp{{IntExpr::var(toggle), CmpKind::kEq, IntExpr::constant(1)},
                    kernel(pong, ping, 0, true)},
               {"db_pong_kernel"}));

  Op staged = op;
  staged.as<ForOp>().body = std::move(body);
  staged.annotate("double_buffered");
  staged.annotate(gen);
  out.push_back(std::move(staged));
  for (Op &d : deallocs)
    out.push_back(std::move(d));
  for (TensorId b : t.inputs)
    p.removeTensor(b);
}

/// Rewrites the annotated copies of one double-buffered loop to DMA.
class DmaLowering {
public:
  explicit DmaLowering(KernelProgram &p) : p_(p) {}

  void prologue(Op &op) {
    for (Op &c : *op.body())
      c = start(c, "dma_prologue");
  }

  void loop(Op &op) {
    for (Op &k : *op.body()) {
      if (!k.hasAnnotation("db_ping_kernel") &&
          !k.hasAnnotation("db_pong_kernel"))
        continue;
      Block &kb = *k.body();
      const std::vector<TagId> current = currentTags(kb);
      Block out;
      for (Op &c : kb) {
        if (c.hasAnnotation("db_prefetch")) {
          for (Op &f : *c.body())
            f = start(f, "dma_prefetch");
          out.push_back(std::move(c));
          for (TagId tag : current)
            out.push_back(p_.makeOp(DmaWaitOp{tag}, {"dma_current"}));
          continue;
        }
        auto *copy = c.getIf<CopyOp>();
        if (copy && p_.tensor(copy->src.tensor).space == MemorySpace::kTCM) {
          Op s = start(c, "dma_store");
          TagId tag = s.as<DmaStartOp>().tag;
          out.push_back(std::move(s));
          out.push_back(p_.makeOp(DmaWaitOp{tag}, {"dma_store"}));
          continue;
        }
        out.push_back(std::move(c));
      }
      kb = std::move(out);
    }
  }

  Block tagAllocs() {
    Block b;
    for (TagId tag : sortedTags())
      b.push_back(p_.makeOp(TagAllocOp{tag}));
    return b;
  }

  Block tagDeallocs() {
    Block b;
    for (TagId tag : sortedTags())
      b.push_back(p_.makeOp(TagDeallocOp{tag}));
    return b;
  }

private:
  std::vector<TagId> sortedTags() const {
    std::vector<TagId> tags;
    for (const auto &[buf, tag] : tags_)
      tags.push_back(tag);
    std::sort(tags.begin(), tags.end());
    return tags;
  }

  TagId tagFor(TensorId buffer) {
    auto it = tags_.find(buffer);
    if (it == tags_.end())
      it = tags_.emplace(buffer, p_.newTag()).first;
    return it->second;
  }

  Op start(const Op &op, const char *annotation) {
    const CopyOp &c = op.as<CopyOp>();
    TensorId staged = p_.tensor(c.dst.tensor).space == MemorySpace::kTCM
                          ? c.dst.tensor
                          : c.src.tensor;
    std::vector<std::string> ann = op.annotations;
    ann.push_back(annotation);
    return p_.makeOp(DmaStartOp{c.src, c.dst, tagFor(staged)}, std::move(ann));
  }

  /// Tags of the prefetched buffers that the compute in `kernel` reads.
  std::vector<TagId> currentTags(const Block &kernel) {
    std::set<TensorId> read;
    for (const Op &op : kernel) {
      if (op.hasAnnotation("db_prefetch"))
        continue;
      walk(Block{op}, [&](const Op &o) {
        if (auto *g = o.getIf<GenericOp>())
          for (const View &v : g->inputs)
            read.insert(v.tensor);
      });
    }
    std::vector<TagId> tags;
    for (TensorId b : read)
      if (tags_.count(b))
        tags.push_back(tags_.at(b));
    return tags;
  }

  KernelProgram &p_;
  std::map<TensorId, TagId> tags_;
};

} // namespace

KernelProgram doubleBufferStructural(const KernelProgram &in) {
  KernelProgram p = in;
  Block out;
  bool any = false;
  for (const Op &op : in.body) {
    if (op.kind() == OpKind::kFor && op.hasAnnotation("tiled_generic") &&
        !op.hasAnnotation("double_buffered")) {
      stageLoop(p, op, out);
      any = true;
    } else {
      out.push_back(op);
    }
  }
  if (!any)
    throw PassError("double buffering needs a tiled loop");
  p.body = std::move(out);
  p.stage = "db-s1";
  return p;
}

KernelProgram doubleBufferDma(const KernelProgram &in) {
  KernelProgram p = in;
  Block out;
  bool any = false;
  for (size_t i = 0; i < in.body.size(); ++i) {
    const Op &op = in.body[i];
    if (!op.hasAnnotation("db_prologue")) {
      out.push_back(op);
      continue;
    }
    auto gen = op.annotationValue("db_generic");
    auto loop =
        std::find_if(in.body.begin() + i, in.body.end(), [&](const Op &o) {
          return o.kind() == OpKind::kFor &&
                 o.hasAnnotation("double_buffered") &&
                 o.annotationValue("db_generic") == gen;
        });
    if (loop == in.body.end())
      throw PassError("db annotations absent");

    DmaLowering lower(p);
    Op prologue = op;
    Op staged = *loop;
    lower.prologue(prologue);
    lower.loop(staged);
    for (Op &a : lower.tagAllocs())
      out.push_back(std::move(a));
    out.push_back(std::move(prologue));
    for (auto it = in.body.begin() + i + 1; it != loop; ++it)
      out.push_back(*it);
    out.push_back(std::move(staged));
    for (Op &d : lower.tagDeallocs())
      out.push_back(std::move(d));
    i = static_cast<size_t>(loop - in.body.begin());
    any = true;
  }
  if (!any)
    throw PassError("db annotations absent");
  p.body = std::move(out);
  p.stage = "db-s2";
  return p;
}

bool removeDmaWait(KernelProgram &p, int index) {
  int seen = 0;
  bool removed = false;
  std::function<void(Block &)> visit = [&](Block &block) {
    for (auto it = block.begin(); it != block.end() && !removed; ++it) {
      if (it->kind() == OpKind::kDmaWait && seen++ == index) {
        block.erase(it);
        removed = true;
        return;
      }
      if (Block *b = it->body())
        visit(*b);
    }
  };
  visit(p.body);
  return removed;
}

} // namespace tcmc
