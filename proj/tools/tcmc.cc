//===- tcmc.cc - Command line driver --------------------------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/double_buffer.h"
#include "tcmc/frontend.h"
#include "tcmc/interpreter.h"
#include "tcmc/oracles.h"
#include "tcmc/perf_model.h"
#include "tcmc/pipeline.h"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace tcmc;
namespace fs = std::filesystem;

namespace {

enum ExitCode {
  kExitOk = 0,
  kExitUsage = 2,
  kExitParse = 3,
  kExitSpec = 4,
  kExitPass = 5,
  kExitVerify = 6,
  kExitFault = 7,
  kExitIO = 8,
};

const char *kExitCodeHelp = R"(Exit codes:
  0  success
  2  bad command line
  3  kernel parse or semantic error
  4  invalid pipeline specification (for example "db requires tile")
  5  a pass rejected the program
  6  verification found a mismatch or an invalid IR
  7  the interpreter or the cycle model hit a runtime fault
  8  missing or unreadable file)";

struct Failure {
  int code;
  std::string message;
};

std::vector<int64_t> parseIntList(const std::string &text, const char *what) {
  std::vector<int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stoll(item, &used));
      if (used != item.size())
        throw std::invalid_argument(item);
    } catch (const std::exception &) {
      throw Failure{kExitUsage, std::string("bad ") + what + " '" + text + "'"};
    }
  }
  return out;
}

struct VerifyMode {
  enum Kind { kOff, kExact, kRelTol } kind = kOff;
  double tol = 0;

  static VerifyMode parse(const std::string &s) {
    if (s == "off")
      return {};
    if (s == "bitexact")
      return {kExact, 0};
    if (s.rfind("reltol:", 0) == 0) {
      try {
        return {kRelTol, std::stod(s.substr(7))};
      } catch (const std::exception &) {
      }
    }
    throw Failure{kExitUsage,
                  "verify mode must be off, bitexact or reltol:TAU"};
  }
};

/// Options shared by `compile` and `run`.
struct PipelineFlags {
  std::string kernel;
  std::string shape = "64,256";
  std::string passes;
  std::string tile_sizes;
  std::string interchange;
  int vector_width = 32;
  int64_t threads = 4;
  std::string dist = "block";
  int64_t mt_threshold = ProfitabilityHeuristic{}.min_domain_points;
  bool double_buffer = false;
  bool db_stage1_only = false;
  std::string math;
  int exp_degree = math::kDefaultExpDegree;
  int newton_iterations = math::kDefaultNewtonIterations;
  std::string verify = "off";
  int drop_wait = -1;
  std::string dump_dir;
  std::string machine;
  uint32_t seed = 0;

  void add(CLI::App &app) {
    app.add_option("kernel", kernel, "Kernel source file (.tk)")->required();
    app.add_option("--shape", shape, "Kernel shape N or R,C")
        ->capture_default_str();
    app.add_option("--passes", passes,
                   "Comma-separated passes from fuse, tile, vectorize, mt, "
                   "async, db, math-approx (default: "
                   "fuse,tile,vectorize,mt,async,db)");
    app.add_option("--tile-size", tile_sizes,
                   "Tile sizes per domain dimension, outermost first");
    app.add_option("--interchange", interchange,
                   "Tile loop order as dimension indices, outermost first");
    app.add_option("--vector-width", vector_width, "Vector width")
        ->capture_default_str();
    app.add_option("--threads", threads, "Virtual threads per loop")
        ->capture_default_str();
    app.add_option("--dist", dist, "Distribution: block or cyclic:CHUNK")
        ->capture_default_str();
    app.add_option("--mt-threshold", mt_threshold,
                   "Minimum domain points for multi-threading")
        ->capture_default_str();
    app.add_flag("--double-buffer", double_buffer,
                 "Append db to the pass list when missing");
    app.add_flag("--db-stage1-only", db_stage1_only,
                 "Stop double buffering after the structural stage");
    app.add_option("--math", math,
                   "exact or approx; approx appends math-approx to the "
                   "passes (default: approx when math-approx is listed)");
    app.add_option("--exp-degree", exp_degree,
                   "Taylor degree of approximated exp and tanh, 2 to 12")
        ->capture_default_str();
    app.add_option("--newton-iterations", newton_iterations,
                   "Newton steps of approximated rsqrt, 1 or 2")
        ->capture_default_str();
    app.add_option("--verify", verify,
                   "off, bitexact or reltol:TAU against the unoptimized "
                   "program after every pass")
        ->capture_default_str();
    app.add_option("--dump-after-all", dump_dir,
                   "Write NN_<pass>.ir after every pass into this directory");
    app.add_option("--machine", machine,
                   "Machine config; prints the simulated timing");
    app.add_option("--seed", seed, "Seed of the verification inputs")
        ->capture_default_str();
    app.add_option("--drop-dma-wait", drop_wait,
                   "Delete the N-th dma_wait of the final program (fault "
                   "injection)")
        ->group("Testing");
  }

  PipelineSpec spec() const {
    PipelineSpec s;
    try {
      if (!passes.empty())
        s.passes = parsePassList(passes);
      if (double_buffer && std::find(s.passes.begin(), s.passes.end(),
                                     PassKind::kDb) == s.passes.end())
        s.passes.push_back(PassKind::kDb);
      s.math = math.empty() ? ApproxPolicy::approx() : parseMathMode(math);
      if (!math.empty() && s.math.mode == ApproxPolicy::Mode::kApprox &&
          std::find(s.passes.begin(), s.passes.end(), PassKind::kMathApprox) ==
              s.passes.end())
        s.passes.push_back(PassKind::kMathApprox);
      s.distribution = parseDistribution(dist, threads);
      checkPipeline(s);
    } catch (const std::invalid_argument &e) {
      throw Failure{kExitSpec, e.what()};
    }
    s.heuristic.min_domain_points = mt_threshold;
    s.vector_width = vector_width;
    s.db_stage1_only = db_stage1_only;
    s.math.exp_degree = exp_degree;
    s.math.newton_iterations = newton_iterations;
    if (!tile_sizes.empty())
      s.tiling.sizes = parseIntList(tile_sizes, "tile sizes");
    for (int64_t d : parseIntList(interchange, "interchange"))
      s.tiling.interchange.push_back(static_cast<int>(d));
    if (!machine.empty())
      s.tiling.tcm_bytes = loadMachine().tcm_bytes;
    return s;
  }

  MachineConfig loadMachine() const {
    try {
      return loadMachineConfig(machine);
    } catch (const std::invalid_argument &e) {
      throw Failure{kExitUsage, e.what()};
    } catch (const std::runtime_error &e) {
      throw Failure{kExitIO, e.what()};
    }
  }
};

KernelAst loadKernel(const std::string &path) {
  if (!fs::exists(path))
    throw Failure{kExitIO, "cannot open " + path};
  return parseKernelFile(path);
}

KernelProgram lowerKernel(const KernelAst &ast, std::vector<int64_t> shape) {
  LowerOptions lo;
  lo.shape = std::move(shape);
  try {
    return lowerToGenerics(ast, lo);
  } catch (const std::invalid_argument &e) {
    throw Failure{kExitUsage, e.what()};
  }
}

std::vector<Stage> runStages(const KernelProgram &p0,
                             const PipelineFlags &flags) {
  PipelineSpec spec = flags.spec();
  std::vector<Stage> stages;
  try {
    stages = runPipeline(p0, spec);
  } catch (const std::invalid_argument &e) {
    throw Failure{kExitSpec, e.what()};
  }
  if (flags.drop_wait >= 0 &&
      !removeDmaWait(stages.back().program, flags.drop_wait))
    throw Failure{kExitUsage, "no dma_wait #" +
                                  std::to_string(flags.drop_wait) + " to drop"};
  return stages;
}

void writeDumps(const std::vector<Stage> &stages, const std::string &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  for (size_t i = 1; i < stages.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%02zu_%s.ir", i, stages[i].name.c_str());
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    f << printIR(stages[i].program);
    if (!f)
      throw Failure{kExitIO, "cannot write " + (fs::path(dir) / name).string()};
  }
}

void verifyStages(const std::vector<Stage> &stages, const VerifyMode &mode,
                  uint32_t seed) {
  TensorMap in = oracle::randomInputs(stages.front().program, seed);
  TensorMap ref = interpret(stages.front().program, in);
  CompareMode cmp = mode.kind == VerifyMode::kExact
                        ? CompareMode::exact()
                        : CompareMode::reltol(mode.tol);
  for (size_t i = 1; i < stages.size(); ++i) {
    VerifyReport ir = verify(stages[i].program);
    if (!ir.ok())
      throw Failure{kExitVerify,
                    "invalid IR after " + stages[i].name + ":\n" + ir.str()};
    CompareReport r =
        compareOutputs(ref, interpret(stages[i].program, in), cmp);
    std::cerr << "verify " << stages[i].name << ": " << r.str() << "\n";
    if (!r.ok)
      throw Failure{kExitVerify, "output changed after " + stages[i].name};
  }
}

void printTiming(const TimingReport &t) {
  std::printf("cycles %.0f compute %.0f transfer %.0f overlapped %.0f "
              "overhead %.0f m %.6f\n",
              t.total_cycles, t.compute_cycles, t.transfer_cycles,
              t.overlapped_cycles, t.overhead_cycles, t.memory_fraction);
}

int runCompile(const PipelineFlags &flags) {
  KernelAst ast = loadKernel(flags.kernel);
  auto stages =
      runStages(lowerKernel(ast, parseIntList(flags.shape, "shape")), flags);
  if (!flags.dump_dir.empty())
    writeDumps(stages, flags.dump_dir);
  VerifyMode mode = VerifyMode::parse(flags.verify);
  if (mode.kind != VerifyMode::kOff)
    verifyStages(stages, mode, flags.seed);
  std::cout << printIR(stages.back().program);
  if (!flags.machine.empty())
    printTiming(simulate(stages.back().program, flags.loadMachine()));
  return kExitOk;
}

int runRun(const PipelineFlags &flags, const std::string &in_dir,
           const std::string &out_dir) {
  KernelAst ast = loadKernel(flags.kernel);
  TensorMap in;
  std::vector<int64_t> shape;
  for (const Param &prm : ast.params) {
    if (prm.kind == ParamKind::kOut)
      continue;
    fs::path stem = fs::path(in_dir) / prm.name;
    try {
      TensorValue t = readTensor(stem.string());
      if (prm.kind == ParamKind::kIn && shape.empty())
        shape = t.shape;
      in.emplace(prm.name, std::move(t));
    } catch (const std::runtime_error &e) {
      throw Failure{kExitIO, e.what()};
    }
  }
  if (shape.empty())
    throw Failure{kExitUsage, "kernel has no `in` parameter to take a shape"};
  auto stages = runStages(lowerKernel(ast, shape), flags);
  VerifyMode mode = VerifyMode::parse(flags.verify);
  if (mode.kind != VerifyMode::kOff)
    verifyStages(stages, mode, flags.seed);
  TensorMap out;
  try {
    out = interpret(stages.back().program, in);
  } catch (const std::invalid_argument &e) {
    throw Failure{kExitIO, e.what()};
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  for (const auto &[name, t] : out) {
    try {
      writeTensor((fs::path(out_dir) / name).string(), t);
    } catch (const std::runtime_error &e) {
      throw Failure{kExitIO, e.what()};
    }
  }
  return kExitOk;
}

struct BenchFlags {
  std::vector<std::string> kernels;
  std::string machine;
  std::string sweep = "passes";
  std::string csv;
  std::string shape = "1024,1024";
  std::string sizes = "8192,16384,32768,65536,131072,262144,524288,1048576";
  std::string fractions = "0,0.25,0.5,0.75,1";
};

int runBench(const BenchFlags &flags) {
  MachineConfig config;
  if (!flags.machine.empty()) {
    PipelineFlags pf;
    pf.machine = flags.machine;
    config = pf.loadMachine();
  }
  std::vector<SweepRow> rows;
  auto append = [&](std::vector<SweepRow> more) {
    for (SweepRow &r : more)
      rows.push_back(std::move(r));
  };
  if (flags.sweep == "m") {
    std::vector<double> ms;
    std::stringstream ss(flags.fractions);
    std::string item;
    while (std::getline(ss, item, ','))
      ms.push_back(std::stod(item));
    try {
      append(overlapSweep(ms, config));
    } catch (const std::invalid_argument &e) {
      throw Failure{kExitUsage, e.what()};
    }
  } else if (flags.sweep == "size" || flags.sweep == "passes") {
    for (const std::string &path : flags.kernels) {
      KernelAst ast = loadKernel(path);
      if (flags.sweep == "size")
        append(threadSweep(ast, parseIntList(flags.sizes, "sizes"), config));
      else
        append(passLadder(ast, parseIntList(flags.shape, "shape"),
                          standardLadder(), config));
    }
  } else {
    throw Failure{kExitUsage, "sweep must be size, m or passes"};
  }
  std::string text = toCsv(rows);
  if (flags.csv.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(flags.csv, std::ios::binary);
    f << text;
    if (!f)
      throw Failure{kExitIO, "cannot write " + flags.csv};
  }
  return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"tcmc: a small tensor compiler for TCM-based vector DSPs"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);

  PipelineFlags compile_flags, run_flags;
  CLI::App *compile =
      app.add_subcommand("compile", "Lower a kernel and run a pass pipeline");
  compile_flags.add(*compile);

  std::string in_dir, out_dir;
  CLI::App *run = app.add_subcommand(
      "run", "Compile a kernel and interpret it on tensors from a directory");
  run_flags.add(*run);
  run->add_option("--inputs", in_dir,
                  "Directory with <param>.bin and <param>.shape files")
      ->required();
  run->add_option("--out", out_dir, "Directory for the output tensors")
      ->required();

  BenchFlags bench_flags;
  CLI::App *bench =
      app.add_subcommand("bench", "Emit cycle-model sweeps as CSV");
  bench->add_option("kernels", bench_flags.kernels, "Kernel source files");
  bench->add_option("--machine", bench_flags.machine, "Machine config file");
  bench->add_option("--sweep", bench_flags.sweep, "size, m or passes")
      ->capture_default_str();
  bench->add_option("--csv", bench_flags.csv, "Output file (default stdout)");
  bench->add_option("--shape", bench_flags.shape, "Shape for pass ladders")
      ->capture_default_str();
  bench->add_option("--sizes", bench_flags.sizes, "Sizes for the size sweep")
      ->capture_default_str();
  bench
      ->add_option("--fractions", bench_flags.fractions,
                   "Memory fractions for the m sweep")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*compile)
      return runCompile(compile_flags);
    if (*run)
      return runRun(run_flags, in_dir, out_dir);
    return runBench(bench_flags);
  } catch (const Failure &f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const ParseError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const PassError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPass;
  } catch (const ExecutionFault &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFault;
  }
}
