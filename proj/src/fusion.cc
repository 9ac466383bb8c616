//===- fusion.cc - Producer/consumer fusion of generic ops ----------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// A producer P writing Y is folded into the consumer Q that reads Y through
// input k. P's domain is relabelled into Q's through the permutation
// witness sigma = phi_Q,k o phi_P,out^-1; P's input maps are composed with
// sigma and P's payload replaces argument k of Q's payload.
//
//===----------------------------------------------------------------------===//

#include "tcmc/fusion.h"

#include <algorithm>
#include <optional>

namespace tcmc {

const char *fusionVetoName(FusionVeto v) {
  switch (v) {
  case FusionVeto::kNone:
    return "legal";
  case FusionVeto::kProducerHasReduction:
    return "producer_has_reduction";
  case FusionVeto::kMapMismatch:
    return "map_mismatch";
  case FusionVeto::kMultiUse:
    return "multi_use";
  }
  return "?";
}

namespace {

const Op *findTopLevel(const KernelProgram &p, OpId id) {
  for (const Op &op : p.body)
    if (op.id == id)
      return &op;
  return nullptr;
}

int64_t countReads(const KernelProgram &p, TensorId t) {
  int64_t n = 0;
  walk(p.body, [&](const Op &op) {
    if (auto *g = op.getIf<GenericOp>()) {
      for (const View &v : g->inputs)
        n += v.tensor == t;
    } else if (auto *c = op.getIf<CopyOp>()) {
      n += c->src.tensor == t;
    } else if (auto *d = op.getIf<DmaStartOp>()) {
      n += d->src.tensor == t;
    }
  });
  return n;
}

/// sigma[dp] = consumer dimension for producer dimension dp, or nullopt for
/// a broadcast (index 0). Empty optional on mismatch.
std::optional<std::vector<std::optional<int>>> witness(const KernelProgram &p,
                                                       const GenericOp &prod,
                                                       const GenericOp &cons,
                                                       int operand) {
  const View &y = prod.outputs[0];
  const TensorDecl &decl = p.tensor(y.tensor);
  if (!y.isWhole(decl) || !cons.inputs[operand].isWhole(decl))
    return std::nullopt;
  const IndexMap &out = prod.output_maps[0];
  const IndexMap &in = cons.input_maps[operand];
  if (static_cast<int>(out.results.size()) != prod.rank())
    return std::nullopt;

  std::vector<std::optional<int>> sigma(prod.rank());
  std::vector<bool> hit(prod.rank(), false);
  for (size_t j = 0; j < out.results.size(); ++j) {
    if (!out.results[j])
      return std::nullopt;
    int dp = *out.results[j];
    hit[dp] = true;
    auto pe = prod.extents[dp].as_constant();
    if (!pe || *pe != decl.shape[j])
      return std::nullopt;
    sigma[dp] = in.results[j];
    if (in.results[j]) {
      auto ce = cons.extents[*in.results[j]].as_constant();
      if (!ce || *ce != decl.shape[j])
        return std::nullopt;
    } else if (decl.shape[j] != 1) {
      return std::nullopt;
    }
  }
  if (!std::all_of(hit.begin(), hit.end(), [](bool b) { return b; }))
    return std::nullopt;
  return sigma;
}

GenericOp fuse(const GenericOp &prod, const GenericOp &cons, int operand,
               const std::vector<std::optional<int>> &sigma) {
  GenericOp f = cons;
  f.inputs.clear();
  f.input_maps.clear();
  const int n = static_cast<int>(cons.inputs.size());

  std::vector<int> cons_arg(n, -1);
  for (int i = 0; i < n; ++i) {
    if (i == operand)
      continue;
    cons_arg[i] = static_cast<int>(f.inputs.size());
    f.inputs.push_back(cons.inputs[i]);
    f.input_maps.push_back(cons.input_maps[i]);
  }

  std::vector<int> prod_arg(prod.inputs.size());
  for (size_t i = 0; i < prod.inputs.size(); ++i) {
    IndexMap m;
    for (const auto &r : prod.input_maps[i].results)
      m.results.push_back(r ? sigma[*r] : std::nullopt);
    int found = -1;
    for (size_t j = 0; j < f.inputs.size(); ++j) {
      const View &v = f.inputs[j];
      if (v.tensor == prod.inputs[i].tensor &&
          v.offsets == prod.inputs[i].offsets &&
          v.sizes == prod.inputs[i].sizes && f.input_maps[j] == m) {
        found = static_cast<int>(j);
        break;
      }
    }
    if (found < 0) {
      found = static_cast<int>(f.inputs.size());
      f.inputs.push_back(prod.inputs[i]);
      f.input_maps.push_back(m);
    }
    prod_arg[i] = found;
  }

  const int acc = static_cast<int>(f.inputs.size());
  Payload inner = prod.payloads[0].map_args(
      [&](int a) { return Payload::arg(prod_arg[a]); });
  for (Payload &pl : f.payloads) {
    pl = pl.map_args([&](int a) {
      if (a == operand)
        return inner;
      if (a >= n)
        return Payload::arg(acc);
      return Payload::arg(cons_arg[a]);
    });
  }
  return f;
}

} // namespace

FusionVeto fusionLegal(const KernelProgram &p, OpId producer, OpId consumer,
                       int operand) {
  const Op *pop = findTopLevel(p, producer);
  const Op *cop = findTopLevel(p, consumer);
  if (!pop || !cop || producer == consumer)
    return FusionVeto::kMapMismatch;
  const auto *prod = pop->getIf<GenericOp>();
  const auto *cons = cop->getIf<GenericOp>();
  if (!prod || !cons || operand < 0 ||
      operand >= static_cast<int>(cons->inputs.size()) ||
      prod->outputs.size() != 1 ||
      cons->inputs[operand].tensor != prod->outputs[0].tensor)
    return FusionVeto::kMapMismatch;
  if (prod->hasReduction())
    return FusionVeto::kProducerHasReduction;
  TensorId y = prod->outputs[0].tensor;
  if (std::find(p.outputs.begin(), p.outputs.end(), y) != p.outputs.end() ||
      countReads(p, y) != 1)
    return FusionVeto::kMultiUse;
  if (prod->vector_width != 1 || cons->vector_width != 1 ||
      !witness(p, *prod, *cons, operand))
    return FusionVeto::kMapMismatch;
  return FusionVeto::kNone;
}

KernelProgram fuseElementwise(const KernelProgram &in, FusionStats *stats) {
  KernelProgram p = in;
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t ci = 0; ci < p.body.size() && !changed; ++ci) {
      const auto *cons = p.body[ci].getIf<GenericOp>();
      if (!cons)
        continue;
      for (int k = 0; !changed && k < static_cast<int>(cons->inputs.size());
           ++k) {
        TensorId y = cons->inputs[k].tensor;
        // The latest earlier top-level generic writing y.
        std::optional<size_t> pi;
        for (size_t j = 0; j < ci; ++j)
          if (auto *g = p.body[j].getIf<GenericOp>())
            for (const View &v : g->outputs)
              if (v.tensor == y)
                pi = j;
        if (!pi || fusionLegal(p, p.body[*pi].id, p.body[ci].id, k) !=
                       FusionVeto::kNone)
          continue;

        const GenericOp &prod = p.body[*pi].as<GenericOp>();
        auto sigma = witness(p, prod, *cons, k);
        GenericOp fused = fuse(prod, *cons, k, *sigma);
        if (stats)
          stats->fired.push_back({p.body[*pi].id, p.body[ci].id, k, y});
        p.body[ci].node = std::move(fused);
        p.body.erase(p.body.begin() + static_cast<std::ptrdiff_t>(*pi));
        p.removeTensor(y);
        changed = true;
      }
    }
  }
  p.stage = "fuse";
  return p;
}

} // namespace tcmc
