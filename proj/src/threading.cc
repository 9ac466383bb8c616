//===- threading.cc - Virtual threads and fork-join lowering --------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/threading.h"

#include <algorithm>

namespace tcmc {

std::string DistributionPolicy::str() const {
  return kind == Kind::kBlock ? "block" : "cyclic:" + std::to_string(chunk);
}

DistributionPolicy parseDistribution(const std::string &text,
                                     int64_t num_threads) {
  if (num_threads < 1)
    throw std::invalid_argument("thread count must be at least 1");
  DistributionPolicy d;
  d.num_threads = num_threads;
  if (text == "block")
    return d;
  const std::string prefix = "cyclic:";
  if (text.rfind(prefix, 0) == 0) {
    std::string n = text.substr(prefix.size());
    if (!n.empty() && n.find_first_not_of("0123456789") == std::string::npos) {
      d.kind = DistributionPolicy::Kind::kBlockCyclic;
      d.chunk = std::stoll(n);
      if (d.chunk >= 1)
        return d;
    }
  }
  throw std::invalid_argument("distribution must be block or cyclic:CHUNK");
}

std::vector<std::pair<int64_t, int64_t>>
threadRanges(int64_t n, const DistributionPolicy &policy, int64_t thread) {
  std::vector<std::pair<int64_t, int64_t>> out;
  const int64_t T = policy.num_threads;
  if (policy.kind == DistributionPolicy::Kind::kBlock) {
    int64_t chunk = (n + T - 1) / T;
    int64_t b = thread * chunk, e = std::min(n, b + chunk);
    if (b < e)
      out.emplace_back(b, e);
    return out;
  }
  for (int64_t j = thread; j * policy.chunk < n; j += T)
    out.emplace_back(j * policy.chunk, std::min(n, (j + 1) * policy.chunk));
  return out;
}

namespace {

/// The generic restricted to [start, start + size) along dimension `dim`.
GenericOp restrict(const GenericOp &g, int dim, const IntExpr &start,
                   const IntExpr &size, int64_t max_size) {
  GenericOp r = g;
  r.extents[dim] = size;
  r.max_extents[dim] = max_size;
  auto shift = [&](std::vector<View> &views,
                   const std::vector<IndexMap> &maps) {
    for (size_t k = 0; k < views.size(); ++k)
      for (size_t i = 0; i < maps[k].results.size(); ++i)
        if (maps[k].results[i] == dim) {
          views[k].offsets[i] = views[k].offsets[i] + start;
          views[k].sizes[i] = size;
        }
  };
  shift(r.inputs, r.input_maps);
  shift(r.outputs, r.output_maps);
  return r;
}

class VirtualThreads {
public:
  VirtualThreads(KernelProgram &p, const DistributionPolicy &policy,
                 const ProfitabilityHeuristic &h)
      : p_(p), policy_(policy), h_(h) {}

  void run() {
    for (Op &op : p_.body) {
      auto *loop = op.getIf<ForOp>();
      if (!loop || !op.hasAnnotation("tiled_generic"))
        continue;
      for (Op &inner : loop->body)
        if (auto *g = inner.getIf<GenericOp>())
          if (g->maxPoints() >= h_.min_domain_points &&
              std::count(g->iterators.begin(), g->iterators.end(),
                         IteratorKind::kParallel) > 0)
            inner = wrap(inner);
    }
  }

private:
  Op wrap(const Op &op) {
    const GenericOp &g = op.as<GenericOp>();
    int dim = -1;
    for (int d = 0; d < g.rank(); ++d)
      if (g.iterators[d] == IteratorKind::kParallel &&
          (dim < 0 || g.max_extents[d] > g.max_extents[dim]))
        dim = d;
    const int64_t T = policy_.num_threads;
    const int64_t cap = g.max_extents[dim];
    const IntExpr &extent = g.extents[dim];
    VarId t = p_.newVar();

    auto piece = [&](const IntExpr &start, int64_t chunk,
                     bool always_full) -> Op {
      Op compute;
      compute.id = op.id;
      compute.annotations = op.annotations;
      if (always_full) {
        compute.node = restrict(g, dim, start, IntExpr::constant(chunk), chunk);
        return compute;
      }
      compute.node = restrict(
          g, dim, start, min(IntExpr::constant(chunk), extent - start), chunk);
      Block body;
      body.push_back(std::move(compute));
      return p_.makeOp(IfOp{{start, CmpKind::kLt, extent}, std::move(body)});
    };

    Block body;
    if (policy_.kind == DistributionPolicy::Kind::kBlock) {
      int64_t chunk = (cap + T - 1) / T;
      bool full = extent.is_constant(chunk * T);
      body.push_back(piece(IntExpr::var(t) * chunk, chunk, full));
    } else {
      int64_t c = policy_.chunk;
      int64_t nchunks = (cap + c - 1) / c;
      int64_t rounds = (nchunks + T - 1) / T;
      VarId k = p_.newVar();
      IntExpr start = IntExpr::var(k) * (T * c) + IntExpr::var(t) * c;
      Block round;
      round.push_back(piece(start, c, false));
      body.push_back(
          p_.makeOp(ForOp{k, IntExpr::constant(rounds), std::move(round)},
                    {"cyclic_rounds"}));
    }
    return p_.makeOp(ForallOp{t, T, std::move(body)},
                     {"virtual_threads", "dist=" + policy_.str()});
  }

  KernelProgram &p_;
  const DistributionPolicy &policy_;
  const ProfitabilityHeuristic &h_;
};

Block lowerForalls(KernelProgram &p, Block &block, bool inside_forall) {
  Block out;
  for (Op &op : block) {
    if (auto *fa = op.getIf<ForallOp>()) {
      if (inside_forall)
        throw PassError("nested forall is not supported");
      Block body = lowerForalls(p, fa->body, true);
      GroupId group = p.newGroup();
      TokenId token = p.newToken();
      out.push_back(p.makeOp(AsyncGroupOp{group, fa->num_threads}));
      Block fork;
      fork.push_back(
          p.makeOp(AsyncExecuteOp{token, std::move(body)}, op.annotations));
      fork.push_back(p.makeOp(AddToGroupOp{group, token}));
      out.push_back(
          p.makeOp(ForOp{fa->thread, IntExpr::constant(fa->num_threads),
                         std::move(fork)},
                   {"async_fork"}));
      out.push_back(p.makeOp(AwaitAllOp{group}));
      continue;
    }
    if (Block *body = op.body())
      *body = lowerForalls(p, *body, inside_forall);
    out.push_back(std::move(op));
  }
  return out;
}

} // namespace

KernelProgram formVirtualThreads(const KernelProgram &in,
                                 const DistributionPolicy &policy,
                                 const ProfitabilityHeuristic &heuristic) {
  if (policy.num_threads < 1 || policy.chunk < 1)
    throw PassError("invalid distribution policy");
  if (heuristic.min_domain_points < 1)
    throw PassError("profitability threshold must be at least 1");
  KernelProgram p = in;
  VirtualThreads(p, policy, heuristic).run();
  p.stage = "mt";
  return p;
}

KernelProgram formAsyncThreads(const KernelProgram &in) {
  KernelProgram p = in;
  p.body = lowerForalls(p, p.body, false);
  p.stage = "async";
  return p;
}

} // namespace tcmc
