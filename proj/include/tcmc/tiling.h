//===- tiling.h - Tiling for TCM and innermost vectorization ----*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// A tiled generic becomes one loop over tiles (the tile index is linearized
// in interchange order) whose body allocates TCM buffers, copies each input
// tile in, runs the generic on the TCM tiles, copies results back and
// frees the buffers. Remainder tiles use clamped sizes min(t, E - offset).
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_TILING_H
#define TCMC_TILING_H

#include "tcmc/ir.h"
#include "tcmc/pass.h"

#include <vector>

namespace tcmc {

inline constexpr int64_t kDefaultTcmBytes = int64_t{8} << 20;

struct TileSpec {
  /// Per domain dimension; 0 leaves the dimension whole.
  std::vector<int64_t> sizes;
  /// Loop order of the tiled dimensions, outermost first. Empty means
  /// ascending, which keeps the contiguous dimension innermost.
  std::vector<int> interchange;
};

/// Bytes of one set of tile buffers (every operand) for `sizes`.
int64_t tileSetBytes(const KernelProgram &p, const GenericOp &g,
                     const std::vector<int64_t> &sizes);

/// Largest tiles, outer parallel dimensions first, such that a ping and a
/// pong set fit in half of `tcm_bytes`. Empty if even unit tiles do not fit.
std::vector<int64_t> defaultTileSizes(const KernelProgram &p,
                                      const GenericOp &g, int64_t tcm_bytes);

/// Tiles the top-level generic `target`. Throws PassError when the spec
/// tiles a reduction dimension, is malformed, or one tile set exceeds
/// `tcm_bytes`.
KernelProgram tileGeneric(const KernelProgram &p, OpId target,
                          const TileSpec &spec,
                          int64_t tcm_bytes = kDefaultTcmBytes);

struct TilingOptions {
  /// Applied to every generic, aligned from the outermost dimension; missing
  /// entries are 0. Entries on reduction dimensions are ignored. Empty
  /// selects defaultTileSizes.
  std::vector<int64_t> sizes;
  std::vector<int> interchange;
  int64_t tcm_bytes = kDefaultTcmBytes;
};

/// Tiles every top-level generic. Throws PassError for more sizes than the
/// widest domain has dimensions and for interchange lists that repeat or
/// name a dimension outside it.
KernelProgram tileProgram(const KernelProgram &p, const TilingOptions &opts);

struct VectorSplit {
  int64_t groups = 0;
  int64_t epilogue = 0;
};

VectorSplit splitVector(int64_t extent, int width);

/// Marks every generic whose innermost dimension is parallel as processed in
/// width-element groups plus a scalar epilogue. Throws PassError for
/// width < 1.
KernelProgram vectorizeInnermost(const KernelProgram &p, int width);

} // namespace tcmc

#endif // TCMC_TILING_H
