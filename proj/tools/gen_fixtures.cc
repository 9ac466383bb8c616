//===- gen_fixtures.cc - Regenerates the committed test fixtures ----------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Usage: tcmc-gen-fixtures <kernels dir> <fixtures dir>
//
// For every shipped kernel, writes seeded inputs and the outputs of the
// unoptimized program to <fixtures>/<kernel>/. Also writes the input of the
// 4-tile GELU runs and the printed IR of the double-buffered GELU with its
// first dma_wait deleted.
//
//===----------------------------------------------------------------------===//

#include "tcmc/double_buffer.h"
#include "tcmc/oracles.h"
#include "tcmc/pipeline.h"

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace tcmc;
namespace fs = std::filesystem;

namespace {

const char *const kKernels[] = {"softmax", "silu",     "gelu",
                                "rmsnorm", "vecadd2d", "expseries"};

void writeAll(const fs::path &dir, const TensorMap &values) {
  fs::create_directories(dir);
  for (const auto &[name, t] : values)
    writeTensor((dir / name).string(), t);
}

} // namespace

int main(int argc, char **argv) {
  if (argc != 3) {
    std::cerr << "usage: tcmc-gen-fixtures <kernels dir> <fixtures dir>\n";
    return 2;
  }
  fs::path kernels = argv[1], out = argv[2];

  for (const char *k : kKernels) {
    KernelAst ast =
        parseKernelFile((kernels / (std::string(k) + ".tk")).string());
    LowerOptions lo;
    lo.shape = {16, 33};
    KernelProgram p = lowerToGenerics(ast, lo);
    TensorMap in = oracle::randomInputs(p, 2024);
    writeAll(out / k / "inputs", in);
    writeAll(out / k / "expected", interpret(p, in));
  }

  KernelAst gelu = parseKernelFile((kernels / "gelu.tk").string());
  LowerOptions lo;
  lo.shape = {4096};
  KernelProgram p = lowerToGenerics(gelu, lo);
  writeAll(out / "gelu_4096", oracle::randomInputs(p, 4096));

  PipelineSpec spec;
  spec.tiling.sizes = {1024};
  spec.heuristic.min_domain_points = 1;
  KernelProgram db = runPipeline(p, spec).back().program;
  removeDmaWait(db, 0);
  std::ofstream(out / "gelu_db_dropped_wait.ir") << printIR(db);
  return 0;
}
