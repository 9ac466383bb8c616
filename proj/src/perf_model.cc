//===- perf_model.cc - Analytic cycle model -------------------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/perf_model.h"
#include "tcmc/double_buffer.h"
#include "tcmc/interpreter.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace tcmc {

//===----------------------------------------------------------------------===//
// MachineConfig
//===----------------------------------------------------------------------===//

namespace {

constexpr PayloadOp kCostedOps[] = {
    PayloadOp::kAdd,        PayloadOp::kSub,       PayloadOp::kMul,
    PayloadOp::kDiv,        PayloadOp::kNeg,       PayloadOp::kMax,
    PayloadOp::kExp,        PayloadOp::kTanh,      PayloadOp::kSqrt,
    PayloadOp::kRsqrt,      PayloadOp::kExpApprox, PayloadOp::kTanhApprox,
    PayloadOp::kRsqrtApprox};

std::string formatNumber(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string &s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

} // namespace

MachineConfig::MachineConfig() {
  op_cycles = {{"add", 1},         {"sub", 1},         {"mul", 1},
               {"div", 8},         {"neg", 1},         {"max", 1},
               {"exp", 20},        {"tanh", 24},       {"sqrt", 12},
               {"rsqrt", 12},      {"exp_approx", 16}, {"tanh_approx", 20},
               {"rsqrt_approx", 8}};
}

double MachineConfig::opCycles(PayloadOp op) const {
  if (op == PayloadOp::kArg || op == PayloadOp::kConst)
    return 0.0;
  auto it = op_cycles.find(payloadOpName(op));
  return it == op_cycles.end() ? 1.0 : it->second;
}

std::string MachineConfig::str() const {
  std::string s;
  auto line = [&](const std::string &k, double v) {
    s += k + " = " + formatNumber(v) + "\n";
  };
  line("dma_bandwidth_bytes_per_cycle", dma_bandwidth_bytes_per_cycle);
  line("dma_latency_cycles", dma_latency_cycles);
  line("access_cycles", access_cycles);
  line("vector_width_effect", vector_width_effect ? 1 : 0);
  line("f16_narrow", f16_narrow ? 1 : 0);
  line("num_hvx_contexts", static_cast<double>(num_hvx_contexts));
  line("thread_spawn_cycles", thread_spawn_cycles);
  line("barrier_cycles", barrier_cycles);
  line("tcm_bytes", static_cast<double>(tcm_bytes));
  line("context_window_bytes", static_cast<double>(context_window_bytes));
  line("locality_penalty", locality_penalty);
  for (PayloadOp op : kCostedOps)
    line(std::string("op.") + payloadOpName(op), opCycles(op));
  return s;
}

MachineConfig parseMachineConfig(const std::string &text) {
  MachineConfig c;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty())
      continue;
    auto where = [&] {
      return "machine config line " + std::to_string(lineno);
    };
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(where() + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string text_value = trim(line.substr(eq + 1));
    double v;
    try {
      size_t used = 0;
      v = std::stod(text_value, &used);
      if (used != text_value.size())
        throw std::invalid_argument("trailing characters");
    } catch (const std::exception &) {
      throw std::invalid_argument(where() + ": bad number '" + text_value +
                                  "'");
    }
    if (std::isnan(v) || v < 0)
      throw std::invalid_argument(where() + ": '" + key +
                                  "' must be non-negative");

    if (key == "dma_bandwidth_bytes_per_cycle")
      c.dma_bandwidth_bytes_per_cycle = v;
    else if (key == "dma_latency_cycles")
      c.dma_latency_cycles = v;
    else if (key == "access_cycles")
      c.access_cycles = v;
    else if (key == "vector_width_effect")
      c.vector_width_effect = v != 0;
    else if (key == "f16_narrow")
      c.f16_narrow = v != 0;
    else if (key == "num_hvx_contexts")
      c.num_hvx_contexts = static_cast<int64_t>(v);
    else if (key == "thread_spawn_cycles")
      c.thread_spawn_cycles = v;
    else if (key == "barrier_cycles")
      c.barrier_cycles = v;
    else if (key == "tcm_bytes")
      c.tcm_bytes = static_cast<int64_t>(v);
    else if (key == "context_window_bytes")
      c.context_window_bytes = static_cast<int64_t>(v);
    else if (key == "locality_penalty")
      c.locality_penalty = v;
    else if (key.rfind("op.", 0) == 0 &&
             std::any_of(std::begin(kCostedOps), std::end(kCostedOps),
                         [&](PayloadOp op) {
                           return key.substr(3) == payloadOpName(op);
                         }))
      c.op_cycles[key.substr(3)] = v;
    else
      throw std::invalid_argument(where() + ": unknown key '" + key + "'");
  }
  if (c.dma_bandwidth_bytes_per_cycle <= 0)
    throw std::invalid_argument("dma_bandwidth_bytes_per_cycle must be > 0");
  if (c.num_hvx_contexts < 1)
    throw std::invalid_argument("num_hvx_contexts must be at least 1");
  if (c.tcm_bytes < 1)
    throw std::invalid_argument("tcm_bytes must be positive");
  if (c.locality_penalty < 1)
    throw std::invalid_argument("locality_penalty must be at least 1");
  return c;
}

MachineConfig loadMachineConfig(const std::string &path) {
  std::ifstream f(path);
  if (!f)
    throw std::runtime_error("cannot open machine config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parseMachineConfig(ss.str());
}

MachineConfig zeroOverheadConfig(MachineConfig c) {
  c.dma_latency_cycles = 0;
  c.thread_spawn_cycles = 0;
  c.barrier_cycles = 0;
  return c;
}

//===----------------------------------------------------------------------===//
// Simulation
//===----------------------------------------------------------------------===//

namespace {

class Simulator {
public:
  Simulator(const KernelProgram &p, const MachineConfig &c)
      : p_(p), c_(c), contexts_(c.num_hvx_contexts, 0.0) {}

  TimingReport run() {
    std::vector<int64_t> vars(p_.num_vars, 0);
    double now = 0;
    block(p_.body, vars, now, /*top=*/true);
    if (!tag_done_.empty())
      throw ExecutionFault(-1, "dma still in flight at kernel exit");
    r_.total_cycles = now;
    double serial = r_.compute_cycles + r_.transfer_cycles;
    r_.overlapped_cycles =
        std::max(0.0, serial + r_.overhead_cycles - r_.total_cycles);
    r_.memory_fraction = serial > 0 ? r_.transfer_cycles / serial : 0.0;
    size_t n = loop_starts_.size();
    if (n >= 3)
      r_.steady_state_cycles =
          (loop_starts_[n - 1] - loop_starts_[1]) / static_cast<double>(n - 2);
    else if (n > 0)
      r_.steady_state_cycles = (loop_end_ - loop_starts_[0]) / n;
    return r_;
  }

private:
  double transferTime(int64_t bytes) const {
    return c_.dma_latency_cycles +
           static_cast<double>(bytes) / c_.dma_bandwidth_bytes_per_cycle;
  }

  int64_t viewBytes(const View &v, const std::vector<int64_t> &vars) const {
    int64_t n = 1;
    for (const IntExpr &s : v.sizes)
      n *= s.eval(vars);
    const TensorDecl &d = p_.tensor(v.tensor);
    return n * (d.type == ElementType::kF16 ? 2 : 4);
  }

  double payloadCycles(const Payload &pl) const {
    double sum = c_.opCycles(pl.op());
    for (const Payload &ch : pl.children())
      sum += payloadCycles(ch);
    return sum;
  }

  /// Synchronous transfer on the DMA engine.
  void copy(int64_t bytes, double &now) {
    double t = transferTime(bytes);
    now = std::max(now, engine_free_) + t;
    engine_free_ = now;
    r_.transfer_cycles += t;
  }

  void generic(const GenericOp &g, const std::vector<int64_t> &vars,
               double &now) {
    std::vector<int64_t> ext;
    for (const IntExpr &e : g.extents)
      ext.push_back(e.eval(vars));
    // Operands still in DDR are streamed in and out around the compute.
    int64_t ddr_bytes = 0, footprint = 0;
    auto account = [&](const View &v) {
      int64_t b = viewBytes(v, vars);
      footprint += b;
      if (p_.tensor(v.tensor).space == MemorySpace::kDDR)
        ddr_bytes += b;
    };
    std::for_each(g.inputs.begin(), g.inputs.end(), account);
    std::for_each(g.outputs.begin(), g.outputs.end(), account);

    double units = 1;
    for (size_t d = 0; d + 1 < ext.size(); ++d)
      units *= static_cast<double>(ext[d]);
    int64_t inner = ext.empty() ? 1 : ext.back();
    if (c_.vector_width_effect && g.vector_width > 1 &&
        g.iterators.back() == IteratorKind::kParallel) {
      bool narrow = c_.f16_narrow && !g.outputs.empty() &&
                    p_.tensor(g.outputs[0].tensor).type == ElementType::kF16;
      int64_t w = g.vector_width * (narrow ? 2 : 1);
      units *= static_cast<double>(inner / w + inner % w);
    } else {
      units *= static_cast<double>(inner);
    }
    double per_point = c_.access_cycles *
                       static_cast<double>(g.inputs.size() + g.outputs.size());
    for (const Payload &pl : g.payloads)
      per_point += payloadCycles(pl);
    double cost = units * per_point;
    if (footprint > c_.context_window_bytes)
      cost *= c_.locality_penalty;

    if (ddr_bytes > 0)
      copy(ddr_bytes, now);
    now += cost;
    r_.compute_cycles += cost;
  }

  bool holds(const Condition &c, const std::vector<int64_t> &vars) const {
    int64_t l = c.lhs.eval(vars), r = c.rhs.eval(vars);
    switch (c.cmp) {
    case CmpKind::kLt:
      return l < r;
    case CmpKind::kEq:
      return l == r;
    case CmpKind::kNe:
      return l != r;
    }
    return false;
  }

  void block(const Block &b, std::vector<int64_t> &vars, double &now,
             bool top) {
    for (const Op &op : b)
      step(op, vars, now, top);
  }

  void step(const Op &op, std::vector<int64_t> &vars, double &now, bool top) {
    switch (op.kind()) {
    case OpKind::kGeneric:
      generic(op.as<GenericOp>(), vars, now);
      return;
    case OpKind::kFor: {
      const auto &f = op.as<ForOp>();
      int64_t n = f.upper.eval(vars);
      bool tracked = top && op.hasAnnotation("tiled_generic");
      if (tracked)
        loop_starts_.clear();
      for (int64_t i = 0; i < n; ++i) {
        vars[f.iv] = i;
        if (tracked)
          loop_starts_.push_back(now);
        block(f.body, vars, now, false);
      }
      if (tracked)
        loop_end_ = now;
      return;
    }
    case OpKind::kForall: {
      // Virtual threads run one after another until lowered to async.
      const auto &f = op.as<ForallOp>();
      for (int64_t t = 0; t < f.num_threads; ++t) {
        vars[f.thread] = t;
        block(f.body, vars, now, false);
      }
      return;
    }
    case OpKind::kIf:
      if (holds(op.as<IfOp>().cond, vars))
        block(op.as<IfOp>().body, vars, now, false);
      return;
    case OpKind::kCopy: {
      const auto &c = op.as<CopyOp>();
      copy(viewBytes(c.dst, vars), now);
      return;
    }
    case OpKind::kDmaStart: {
      const auto &d = op.as<DmaStartOp>();
      if (tag_done_.count(d.tag))
        throw ExecutionFault(op.id, "tag " + std::to_string(d.tag) +
                                        " already in flight");
      double t = transferTime(viewBytes(d.dst, vars));
      engine_free_ = std::max(now, engine_free_) + t;
      tag_done_[d.tag] = engine_free_;
      r_.transfer_cycles += t;
      return;
    }
    case OpKind::kDmaWait: {
      TagId tag = op.as<DmaWaitOp>().tag;
      auto it = tag_done_.find(tag);
      if (it == tag_done_.end())
        throw ExecutionFault(op.id, "dma_wait on tag " + std::to_string(tag) +
                                        " with no dma in flight");
      now = std::max(now, it->second);
      tag_done_.erase(it);
      return;
    }
    case OpKind::kAsyncGroup:
      groups_[op.as<AsyncGroupOp>().group].clear();
      return;
    case OpKind::kAsyncExecute: {
      const auto &a = op.as<AsyncExecuteOp>();
      now += c_.thread_spawn_cycles;
      r_.overhead_cycles += c_.thread_spawn_cycles;
      auto slot = std::min_element(contexts_.begin(), contexts_.end());
      double clock = std::max(now, *slot);
      std::vector<int64_t> local = vars;
      block(a.body, local, clock, false);
      *slot = clock;
      token_end_[a.token] = clock;
      return;
    }
    case OpKind::kAddToGroup: {
      const auto &a = op.as<AddToGroupOp>();
      groups_[a.group].push_back(token_end_.at(a.token));
      return;
    }
    case OpKind::kAwaitAll: {
      for (double end : groups_[op.as<AwaitAllOp>().group])
        now = std::max(now, end);
      now += c_.barrier_cycles;
      r_.overhead_cycles += c_.barrier_cycles;
      return;
    }
    case OpKind::kStoreToggle: {
      const auto &s = op.as<StoreToggleOp>();
      cells_[s.cell] = s.value.eval(vars);
      return;
    }
    case OpKind::kLoadToggle: {
      const auto &l = op.as<LoadToggleOp>();
      vars[l.dest] = cells_[l.cell];
      return;
    }
    case OpKind::kAlloc:
    case OpKind::kDealloc:
    case OpKind::kTagAlloc:
    case OpKind::kTagDealloc:
      return;
    }
  }

  const KernelProgram &p_;
  const MachineConfig &c_;
  TimingReport r_;
  double engine_free_ = 0;
  std::map<TagId, double> tag_done_;
  std::vector<double> contexts_;
  std::map<GroupId, std::vector<double>> groups_;
  std::map<TokenId, double> token_end_;
  std::map<CellId, int64_t> cells_;
  std::vector<double> loop_starts_;
  double loop_end_ = 0;
};

} // namespace

TimingReport simulate(const KernelProgram &p, const MachineConfig &config) {
  return Simulator(p, config).run();
}

double idealOverlapSpeedup(double m) {
  if (!(m >= 0.0 && m <= 1.0))
    throw std::invalid_argument("memory fraction must be in [0, 1]");
  return 1.0 / std::max(m, 1.0 - m);
}

//===----------------------------------------------------------------------===//
// Overlap probe
//===----------------------------------------------------------------------===//

namespace {

constexpr int64_t kProbeTiles = 8;
constexpr int64_t kProbeTile = 1024;

/// for i < kProbeTiles { copy x[i] -> tcm; generic tcm -> out }, with the
/// result left in TCM so that the loop carries no store traffic.
KernelProgram overlapProbeProgram() {
  KernelProgram p;
  p.name = "overlap_probe";
  p.stage = "tile";
  TensorId x = p.addTensor("x", {kProbeTiles, kProbeTile}, MemorySpace::kDDR,
                           TensorRole::kInput);
  p.inputs.push_back(x);
  TensorId in = p.addTensor("x_tcm", {1, kProbeTile}, MemorySpace::kTCM,
                            TensorRole::kBuffer);
  TensorId out = p.addTensor("y_tcm", {1, kProbeTile}, MemorySpace::kTCM,
                             TensorRole::kBuffer);
  VarId iv = p.newVar();

  View src{x,
           {IntExpr::var(iv), IntExpr::constant(0)},
           {IntExpr::constant(1), IntExpr::constant(kProbeTile)}};
  GenericOp g;
  for (int64_t e : {int64_t{1}, kProbeTile}) {
    g.extents.push_back(IntExpr::constant(e));
    g.max_extents.push_back(e);
    g.iterators.push_back(IteratorKind::kParallel);
  }
  g.inputs.push_back(View::whole(p.tensor(in)));
  g.input_maps.push_back(IndexMap::identity(2));
  g.outputs.push_back(View::whole(p.tensor(out)));
  g.output_maps.push_back(IndexMap::identity(2));
  g.payloads.push_back(
      Payload::binary(PayloadOp::kMul, Payload::arg(0), Payload::arg(0)));
  g.combinators.push_back(Combinator::kNone);

  Block body;
  body.push_back(p.makeOp(AllocOp{in}));
  body.push_back(p.makeOp(CopyOp{src, View::whole(p.tensor(in))}));
  body.push_back(p.makeOp(AllocOp{out}));
  body.push_back(p.makeOp(std::move(g)));
  body.push_back(p.makeOp(DeallocOp{in}));
  body.push_back(p.makeOp(DeallocOp{out}));
  p.body.push_back(
      p.makeOp(ForOp{iv, IntExpr::constant(kProbeTiles), std::move(body)},
               {"tiled_generic", "all_parallel"}));
  return p;
}

} // namespace

OverlapPoint measureOverlap(double m, const MachineConfig &base) {
  OverlapPoint pt;
  pt.m = m;
  pt.ideal = idealOverlapSpeedup(m);

  // One tile moves 4 KiB. Bandwidth and multiply cost put the transfer and
  // compute time per tile in the ratio m : 1 - m.
  MachineConfig c = zeroOverheadConfig(base);
  c.access_cycles = 0;
  c.context_window_bytes = std::numeric_limits<int64_t>::max();
  const double tile_bytes = 4.0 * kProbeTile;
  if (m == 0.0) {
    c.dma_bandwidth_bytes_per_cycle = std::numeric_limits<double>::infinity();
    c.op_cycles["mul"] = 1.0;
  } else {
    c.dma_bandwidth_bytes_per_cycle = 4.0;
    double transfer = tile_bytes / c.dma_bandwidth_bytes_per_cycle;
    c.op_cycles["mul"] = transfer * (1.0 - m) / m / kProbeTile;
  }

  KernelProgram plain = overlapProbeProgram();
  KernelProgram db = doubleBufferDma(doubleBufferStructural(plain));
  pt.plain = simulate(plain, c);
  pt.double_buffered = simulate(db, c);
  pt.measured =
      pt.plain.steady_state_cycles / pt.double_buffered.steady_state_cycles;
  return pt;
}

//===----------------------------------------------------------------------===//
// Sweeps
//===----------------------------------------------------------------------===//

std::string csvHeader() {
  return "kernel,size,passes,cycles,compute,transfer,overhead,m,speedup\n";
}

std::string toCsv(const std::vector<SweepRow> &rows) {
  std::string s = csvHeader();
  char buf[512];
  for (const SweepRow &r : rows) {
    std::snprintf(buf, sizeof buf,
                  "%s,%s,\"%s\",%.0f,%.0f,%.0f,%.0f,%.6f,%.6f\n",
                  r.kernel.c_str(), r.size.c_str(), r.passes.c_str(),
                  r.report.total_cycles, r.report.compute_cycles,
                  r.report.transfer_cycles, r.report.overhead_cycles,
                  r.report.memory_fraction, r.speedup);
    s += buf;
  }
  return s;
}

namespace {

std::string shapeStr(const std::vector<int64_t> &shape) {
  std::string s;
  for (int64_t e : shape)
    s += (s.empty() ? "" : "x") + std::to_string(e);
  return s;
}

TimingReport simulatePasses(const KernelAst &kernel,
                            const std::vector<int64_t> &shape,
                            const std::vector<PassKind> &passes,
                            const MachineConfig &config, int64_t mt_threshold) {
  LowerOptions lo;
  lo.shape = shape;
  PipelineSpec spec;
  spec.passes = passes;
  spec.tiling.tcm_bytes = config.tcm_bytes;
  spec.distribution.num_threads = config.num_hvx_contexts;
  spec.heuristic.min_domain_points = mt_threshold;
  auto stages = runPipeline(lowerToGenerics(kernel, lo), spec);
  return simulate(stages.back().program, config);
}

} // namespace

std::vector<SweepRow> threadSweep(const KernelAst &kernel,
                                  const std::vector<int64_t> &sizes,
                                  const MachineConfig &config) {
  const std::vector<PassKind> st = {PassKind::kFuse, PassKind::kTile,
                                    PassKind::kVectorize};
  std::vector<PassKind> mt = st;
  mt.push_back(PassKind::kMt);
  mt.push_back(PassKind::kAsync);
  std::vector<SweepRow> rows;
  for (int64_t n : sizes) {
    SweepRow a{kernel.name, std::to_string(n), passListStr(st),
               simulatePasses(kernel, {n}, st, config, 1), 1.0};
    SweepRow b{kernel.name, std::to_string(n), passListStr(mt),
               simulatePasses(kernel, {n}, mt, config, 1), 1.0};
    b.speedup = a.report.total_cycles / b.report.total_cycles;
    rows.push_back(std::move(a));
    rows.push_back(std::move(b));
  }
  return rows;
}

std::vector<Rung> standardLadder() {
  using K = PassKind;
  return {{"Scalar", {K::kFuse, K::kTile}},
          {"Vec", {K::kFuse, K::kTile, K::kVectorize}},
          {"Vec+MT", {K::kFuse, K::kTile, K::kVectorize, K::kMt, K::kAsync}},
          {"Vec+MT+DB",
           {K::kFuse, K::kTile, K::kVectorize, K::kMt, K::kAsync, K::kDb}}};
}

std::vector<SweepRow> passLadder(const KernelAst &kernel,
                                 const std::vector<int64_t> &shape,
                                 const std::vector<Rung> &ladder,
                                 const MachineConfig &config) {
  std::vector<SweepRow> rows;
  for (const Rung &rung : ladder) {
    SweepRow r{kernel.name, shapeStr(shape), passListStr(rung.passes),
               simulatePasses(kernel, shape, rung.passes, config,
                              ProfitabilityHeuristic{}.min_domain_points),
               1.0};
    if (!rows.empty())
      r.speedup = rows.front().report.total_cycles / r.report.total_cycles;
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<SweepRow> overlapSweep(const std::vector<double> &fractions,
                                   const MachineConfig &config) {
  std::vector<SweepRow> rows;
  for (double m : fractions) {
    OverlapPoint pt = measureOverlap(m, config);
    SweepRow plain{"overlap_probe", std::to_string(kProbeTiles * kProbeTile),
                   "tile", pt.plain, 1.0};
    SweepRow db{"overlap_probe", plain.size, "tile,db", pt.double_buffered,
                pt.measured};
    rows.push_back(std::move(plain));
    rows.push_back(std::move(db));
  }
  return rows;
}

} // namespace tcmc
