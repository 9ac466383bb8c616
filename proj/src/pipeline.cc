//===- pipeline.cc - Ordered pass pipelines -------------------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/pipeline.h"
#include "tcmc/double_buffer.h"
#include "tcmc/fusion.h"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace tcmc {

namespace {

constexpr PassKind kAllPasses[] = {
    PassKind::kFuse,  PassKind::kTile, PassKind::kVectorize, PassKind::kMt,
    PassKind::kAsync, PassKind::kDb,   PassKind::kMathApprox};

} // namespace

const char *passName(PassKind k) {
  switch (k) {
  case PassKind::kFuse:
    return "fuse";
  case PassKind::kTile:
    return "tile";
  case PassKind::kVectorize:
    return "vectorize";
  case PassKind::kMt:
    return "mt";
  case PassKind::kAsync:
    return "async";
  case PassKind::kDb:
    return "db";
  case PassKind::kMathApprox:
    return "math-approx";
  }
  return "?";
}

std::vector<PassKind> parsePassList(const std::string &text) {
  std::vector<PassKind> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty())
      continue;
    auto it = std::find_if(std::begin(kAllPasses), std::end(kAllPasses),
                           [&](PassKind k) { return item == passName(k); });
    if (it == std::end(kAllPasses))
      throw std::invalid_argument("unknown pass '" + item + "'");
    out.push_back(*it);
  }
  return out;
}

std::string passListStr(const std::vector<PassKind> &passes) {
  std::string s;
  for (PassKind k : passes) {
    if (!s.empty())
      s += ',';
    s += passName(k);
  }
  return s.empty() ? "none" : s;
}

std::vector<PassKind> defaultPasses() {
  return {PassKind::kFuse, PassKind::kTile,  PassKind::kVectorize,
          PassKind::kMt,   PassKind::kAsync, PassKind::kDb};
}

void checkPipeline(const PipelineSpec &spec) {
  const auto &ps = spec.passes;
  auto pos = [&](PassKind k) -> int {
    auto it = std::find(ps.begin(), ps.end(), k);
    return it == ps.end() ? -1 : static_cast<int>(it - ps.begin());
  };
  for (PassKind k : kAllPasses)
    if (std::count(ps.begin(), ps.end(), k) > 1)
      throw std::invalid_argument(std::string("pass '") + passName(k) +
                                  "' listed twice");
  auto needs = [&](PassKind later, PassKind earlier) {
    int l = pos(later);
    if (l >= 0 && (pos(earlier) < 0 || pos(earlier) > l))
      throw std::invalid_argument(std::string(passName(later)) + " requires " +
                                  passName(earlier));
  };
  needs(PassKind::kDb, PassKind::kTile);
  needs(PassKind::kAsync, PassKind::kMt);
  needs(PassKind::kMt, PassKind::kTile);
  auto before = [&](PassKind first, PassKind second) {
    if (pos(first) >= 0 && pos(second) >= 0 && pos(first) > pos(second))
      throw std::invalid_argument(std::string(passName(first)) +
                                  " must run before " + passName(second));
  };
  before(PassKind::kFuse, PassKind::kTile);
  before(PassKind::kMt, PassKind::kDb);
  before(PassKind::kAsync, PassKind::kDb);
}

std::vector<Stage> runPipeline(const KernelProgram &input,
                               const PipelineSpec &spec) {
  checkPipeline(spec);
  std::vector<Stage> stages{{"frontend", input}};
  auto push = [&](std::string name, KernelProgram p) {
    stages.push_back({std::move(name), std::move(p)});
  };
  for (PassKind k : spec.passes) {
    const KernelProgram &cur = stages.back().program;
    switch (k) {
    case PassKind::kFuse:
      push("fuse", fuseElementwise(cur));
      break;
    case PassKind::kTile:
      push("tile", tileProgram(cur, spec.tiling));
      break;
    case PassKind::kVectorize:
      push("vectorize", vectorizeInnermost(cur, spec.vector_width));
      break;
    case PassKind::kMt:
      push("mt", formVirtualThreads(cur, spec.distribution, spec.heuristic));
      break;
    case PassKind::kAsync:
      push("async", formAsyncThreads(cur));
      break;
    case PassKind::kDb: {
      KernelProgram s1 = doubleBufferStructural(cur);
      if (spec.db_stage1_only) {
        push("db-s1", std::move(s1));
        break;
      }
      KernelProgram s2 = doubleBufferDma(s1);
      push("db-s1", std::move(s1));
      push("db-s2", std::move(s2));
      break;
    }
    case PassKind::kMathApprox:
      push("math-approx", expandMathOps(cur, spec.math));
      break;
    }
  }
  return stages;
}

} // namespace tcmc
