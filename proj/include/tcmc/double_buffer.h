//===- double_buffer.h - Ping-pong staging of tile loops --------*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Double buffering runs in two stages.
//
// The structural stage rewrites every tiled loop so that each input tile has
// a ping and a pong buffer allocated once outside the loop. A toggle cell in
// memory selects the kernel variant for the current iteration. The variant
// computing on ping prefetches the next tile into pong and the other way
// round. Copies stay synchronous, so the result is already runnable.
//
// The DMA stage turns the annotated copies into dma_start/dma_wait pairs on
// per-buffer tags, which lets the prefetch of tile i+1 overlap the compute on
// tile i.
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_DOUBLE_BUFFER_H
#define TCMC_DOUBLE_BUFFER_H

#include "tcmc/ir.h"
#include "tcmc/pass.h"

namespace tcmc {

/// Stage 1. Throws PassError when the program has no tiled loop.
KernelProgram doubleBufferStructural(const KernelProgram &p);

/// Stage 2. Throws PassError("db annotations absent") unless `p` went
/// through doubleBufferStructural.
KernelProgram doubleBufferDma(const KernelProgram &p);

/// Deletes the `index`-th dma_wait in pre-order. Used to build programs that
/// must be rejected at run time. Returns false if there is no such wait.
bool removeDmaWait(KernelProgram &p, int index = 0);

} // namespace tcmc

#endif // TCMC_DOUBLE_BUFFER_H
