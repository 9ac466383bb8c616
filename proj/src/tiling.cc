//===- tiling.cc - Tiling for TCM and innermost vectorization -------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/tiling.h"

#include <algorithm>
#include <numeric>

namespace tcmc {

namespace {

int64_t staticExtent(const GenericOp &g, int d) {
  auto c = g.extents[d].as_constant();
  if (!c)
    throw PassError("tiling requires static extents");
  return *c;
}

int64_t tileOf(const GenericOp &g, const std::vector<int64_t> &sizes, int d) {
  int64_t e = staticExtent(g, d);
  int64_t t = d < static_cast<int>(sizes.size()) ? sizes[d] : 0;
  return t == 0 ? e : std::min(t, e);
}

/// Static shape of the tile buffer for one operand.
std::vector<int64_t> bufferShape(const GenericOp &g, const View &v,
                                 const IndexMap &m,
                                 const std::vector<int64_t> &sizes) {
  std::vector<int64_t> shape;
  for (size_t i = 0; i < m.results.size(); ++i) {
    if (m.results[i]) {
      shape.push_back(tileOf(g, sizes, *m.results[i]));
    } else {
      auto c = v.sizes[i].as_constant();
      if (!c)
        throw PassError("tiling requires static operand views");
      shape.push_back(*c);
    }
  }
  return shape;
}

int64_t product(const std::vector<int64_t> &v) {
  return std::accumulate(v.begin(), v.end(), int64_t{1},
                         std::multiplies<int64_t>());
}

bool fitsDoubleBuffered(int64_t set_bytes, int64_t tcm_bytes) {
  return 4 * set_bytes <= tcm_bytes;
}

} // namespace

int64_t tileSetBytes(const KernelProgram &, const GenericOp &g,
                     const std::vector<int64_t> &sizes) {
  int64_t bytes = 0;
  for (size_t i = 0; i < g.inputs.size(); ++i)
    bytes += 4 * product(bufferShape(g, g.inputs[i], g.input_maps[i], sizes));
  for (size_t i = 0; i < g.outputs.size(); ++i)
    bytes += 4 * product(bufferShape(g, g.outputs[i], g.output_maps[i], sizes));
  return bytes;
}

std::vector<int64_t> defaultTileSizes(const KernelProgram &p,
                                      const GenericOp &g, int64_t tcm_bytes) {
  std::vector<int64_t> sizes(g.rank(), 0);
  if (fitsDoubleBuffered(tileSetBytes(p, g, sizes), tcm_bytes))
    return sizes;
  for (int d = 0; d < g.rank(); ++d) {
    if (g.iterators[d] != IteratorKind::kParallel)
      continue;
    int64_t lo = 1, hi = staticExtent(g, d);
    sizes[d] = lo;
    if (!fitsDoubleBuffered(tileSetBytes(p, g, sizes), tcm_bytes))
      continue; // a unit tile is still too large: tile the next dimension
    while (lo < hi) {
      int64_t mid = lo + (hi - lo + 1) / 2;
      sizes[d] = mid;
      if (fitsDoubleBuffered(tileSetBytes(p, g, sizes), tcm_bytes))
        lo = mid;
      else
        hi = mid - 1;
    }
    sizes[d] = lo;
    return sizes;
  }
  return {};
}

KernelProgram tileGeneric(const KernelProgram &in, OpId target,
                          const TileSpec &spec, int64_t tcm_bytes) {
  KernelProgram p = in;
  auto it = std::find_if(p.body.begin(), p.body.end(),
                         [&](const Op &op) { return op.id == target; });
  if (it == p.body.end() || it->kind() != OpKind::kGeneric)
    throw PassError("no top-level generic #" + std::to_string(target));
  Op original = *it;
  const GenericOp &g = original.as<GenericOp>();
  const int rank = g.rank();

  if (static_cast<int>(spec.sizes.size()) > rank)
    throw PassError("tile sizes exceed the domain rank");
  std::vector<int64_t> sizes = spec.sizes;
  sizes.resize(rank, 0);
  std::vector<int> tiled;
  for (int d = 0; d < rank; ++d) {
    if (sizes[d] < 0)
      throw PassError("negative tile size");
    if (sizes[d] == 0)
      continue;
    if (g.iterators[d] == IteratorKind::kReduction)
      throw PassError("cannot tile reduction dimension d" + std::to_string(d));
    tiled.push_back(d);
  }
  std::vector<int> order = spec.interchange.empty() ? tiled : spec.interchange;
  {
    std::vector<int> a = order, b = tiled;
    std::sort(a.begin(), a.end());
    if (a != b)
      throw PassError("interchange must permute the tiled dimensions");
  }
  int64_t set_bytes = tileSetBytes(p, g, sizes);
  if (set_bytes > tcm_bytes)
    throw PassError("tile set of " + std::to_string(set_bytes) +
                    " bytes exceeds TCM capacity " + std::to_string(tcm_bytes));

  // Tile coordinates from the linearized induction variable.
  VarId iv = p.newVar();
  std::vector<IntExpr> off(rank, IntExpr::constant(0)), size(rank);
  std::vector<int64_t> tile(rank), count(rank, 1);
  for (int d = 0; d < rank; ++d) {
    tile[d] = tileOf(g, sizes, d);
    int64_t e = staticExtent(g, d);
    count[d] = (e + tile[d] - 1) / tile[d];
    size[d] = IntExpr::constant(e);
  }
  int64_t trip = 1;
  for (int d : order)
    trip *= count[d];
  int64_t stride = trip;
  for (size_t j = 0; j < order.size(); ++j) {
    int d = order[j];
    stride /= count[d];
    IntExpr idx = floordiv(IntExpr::var(iv), stride);
    if (j > 0)
      idx = mod(idx, count[d]);
    off[d] = idx * tile[d];
    int64_t e = staticExtent(g, d);
    size[d] = e % tile[d] == 0 ? IntExpr::constant(tile[d])
                               : min(IntExpr::constant(tile[d]),
                                     IntExpr::constant(e) - off[d]);
  }

  GenericOp inner = g;
  for (int d = 0; d < rank; ++d) {
    inner.extents[d] = size[d];
    inner.max_extents[d] = tile[d];
  }

  Block body, copy_out, deallocs;
  auto stage = [&](const View &v, const IndexMap &m, bool is_input) {
    const TensorDecl decl = p.tensor(v.tensor);
    TensorId buf = p.addTensor(p.freshName(decl.name + "_tcm"),
                               bufferShape(g, v, m, sizes), MemorySpace::kTCM,
                               TensorRole::kBuffer, decl.type);
    View ddr = v, tcm;
    tcm.tensor = buf;
    for (size_t i = 0; i < m.results.size(); ++i) {
      if (m.results[i]) {
        int d = *m.results[i];
        ddr.offsets[i] = v.offsets[i] + off[d];
        ddr.sizes[i] = size[d];
      }
      tcm.offsets.push_back(IntExpr::constant(0));
      tcm.sizes.push_back(ddr.sizes[i]);
    }
    body.push_back(p.makeOp(AllocOp{buf}));
    if (is_input)
      body.push_back(p.makeOp(CopyOp{ddr, tcm}));
    else
      copy_out.push_back(p.makeOp(CopyOp{tcm, ddr}));
    deallocs.push_back(p.makeOp(DeallocOp{buf}));
    return tcm;
  };
  for (size_t i = 0; i < g.inputs.size(); ++i)
    inner.inputs[i] = stage(g.inputs[i], g.input_maps[i], true);
  for (size_t i = 0; i < g.outputs.size(); ++i)
    inner.outputs[i] = stage(g.outputs[i], g.output_maps[i], false);

  Op compute;
  compute.id = original.id;
  compute.annotations = original.annotations;
  compute.node = std::move(inner);
  body.push_back(std::move(compute));
  for (Op &op : copy_out)
    body.push_back(std::move(op));
  for (Op &op : deallocs)
    body.push_back(std::move(op));

  Op loop = p.makeOp(ForOp{iv, IntExpr::constant(trip), std::move(body)},
                     {"tiled_generic", "all_parallel"});
  auto pos = std::find_if(p.body.begin(), p.body.end(),
                          [&](const Op &op) { return op.id == target; });
  *pos = std::move(loop);
  p.stage = "tile";
  return p;
}

KernelProgram tileProgram(const KernelProgram &in, const TilingOptions &opts) {
  std::vector<OpId> targets;
  int max_rank = 0;
  for (const Op &op : in.body)
    if (auto *g = op.getIf<GenericOp>()) {
      targets.push_back(op.id);
      max_rank = std::max(max_rank, g->rank());
    }
  if (static_cast<int>(opts.sizes.size()) > max_rank && !targets.empty())
    throw PassError("more tile sizes than domain dimensions");
  std::vector<bool> seen(max_rank, false);
  for (int d : opts.interchange) {
    if (d < 0 || d >= max_rank || seen[d])
      throw PassError("interchange must permute the tiled dimensions");
    seen[d] = true;
  }

  KernelProgram p = in;
  for (OpId id : targets) {
    const Op &op = *std::find_if(p.body.begin(), p.body.end(),
                                 [&](const Op &o) { return o.id == id; });
    const GenericOp &g = op.as<GenericOp>();
    TileSpec spec;
    if (opts.sizes.empty()) {
      spec.sizes = defaultTileSizes(p, g, opts.tcm_bytes);
      if (spec.sizes.empty())
        continue; // stays in DDR
    } else {
      spec.sizes = opts.sizes;
      spec.sizes.resize(g.rank(), 0);
      for (int d = 0; d < g.rank(); ++d)
        if (g.iterators[d] == IteratorKind::kReduction)
          spec.sizes[d] = 0;
    }
    if (!opts.interchange.empty()) {
      for (int d : opts.interchange)
        if (d >= 0 && d < g.rank() && spec.sizes[d] > 0)
          spec.interchange.push_back(d);
      for (int d = 0; d < g.rank(); ++d)
        if (spec.sizes[d] > 0 &&
            std::find(spec.interchange.begin(), spec.interchange.end(), d) ==
                spec.interchange.end())
          spec.interchange.push_back(d);
    }
    p = tileGeneric(p, id, spec, opts.tcm_bytes);
  }
  p.stage = "tile";
  return p;
}

VectorSplit splitVector(int64_t extent, int width) {
  if (width < 1)
    throw PassError("vector width must be at least 1");
  return {extent / width, extent % width};
}

KernelProgram vectorizeInnermost(const KernelProgram &in, int width) {
  if (width < 1)
    throw PassError("vector width must be at least 1");
  KernelProgram p = in;
  walk(p.body, [&](Op &op) {
    auto *g = op.getIf<GenericOp>();
    if (!g || g->iterators.back() != IteratorKind::kParallel)
      return;
    g->vector_width = width;
    op.annotate("vectorized(" + std::to_string(width) + ")");
  });
  p.stage = "vectorize";
  return p;
}

} // namespace tcmc
