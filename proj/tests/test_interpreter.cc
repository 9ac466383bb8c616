//===- test_interpreter.cc - Reference interpreter tests ------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "doctest.h"

#include "tcmc/double_buffer.h"
#include "tcmc/frontend.h"
#include "tcmc/interpreter.h"
#include "tcmc/oracles.h"
#include "tcmc/pipeline.h"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace tcmc;

namespace {

KernelProgram shipped(const std::string &name, std::vector<int64_t> shape,
                      std::map<std::string, float> constants = {}) {
  LowerOptions lo;
  lo.shape = std::move(shape);
  lo.constants = std::move(constants);
  return lowerToGenerics(
      parseKernelFile(TCMC_SOURCE_DIR "/kernels/" + name + ".tk"), lo);
}

std::vector<float> run1(const std::string &kernel, std::vector<float> x) {
  int64_t n = static_cast<int64_t>(x.size());
  TensorMap in;
  in["x"] = TensorValue({n}, std::move(x));
  return interpret(shipped(kernel, {n}), in).at("y").data;
}

KernelProgram doubleBufferedGelu() {
  KernelProgram p = shipped("gelu", {4096});
  PipelineSpec spec;
  spec.tiling.sizes = {1024};
  spec.heuristic.min_domain_points = 1;
  return runPipeline(p, spec).back().program;
}

} // namespace

TEST_SUITE("kernels") {
  TEST_CASE("softmax of 1, 2, 3") {
    std::vector<float> y = run1("softmax", {1, 2, 3});
    CHECK(y[0] == doctest::Approx(0.09003057).epsilon(1e-6));
    CHECK(y[1] == doctest::Approx(0.24472847).epsilon(1e-6));
    CHECK(y[2] == doctest::Approx(0.66524096).epsilon(1e-6));
  }

  TEST_CASE("softmax of a constant row is uniform") {
    for (float c : {-40.0f, 0.0f, 3.5f, 80.0f}) {
      std::vector<float> y = run1("softmax", {c, c, c});
      for (float v : y)
        CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    }
  }

  TEST_CASE("gelu and silu at known points") {
    CHECK(run1("gelu", {0.0f})[0] == 0.0f);
    std::vector<float> y = run1("silu", {0.0f, 1.0f});
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == doctest::Approx(0.7310586).epsilon(1e-6));
  }

  TEST_CASE("rmsnorm of ones is ones") {
    KernelProgram p = shipped("rmsnorm", {1, 3}, {{"EPSILON", 0.0f}});
    TensorMap in;
    in["x"] = TensorValue({1, 3}, 1.0f);
    in["g"] = TensorValue({3}, 1.0f);
    TensorMap out = interpret(p, in);
    for (float v : out.at("y").data)
      CHECK(v == 1.0f);
  }
}

TEST_SUITE("compare") {
  TensorMap one(float v) {
    TensorMap m;
    m["y"] = TensorValue({1}, {v});
    return m;
  }

  TEST_CASE("identical tensors match bit-exactly") {
    CHECK(compareOutputs(one(2.5f), one(2.5f), CompareMode::exact()).ok);
  }

  TEST_CASE("signed zeros differ bit-exactly but not within a tolerance") {
    CHECK_FALSE(compareOutputs(one(0.0f), one(-0.0f), CompareMode::exact()).ok);
    CHECK(compareOutputs(one(0.0f), one(-0.0f), CompareMode::reltol(0)).ok);
  }

  TEST_CASE("relative tolerance names the worst offender") {
    CompareReport r =
        compareOutputs(one(1.0f), one(1.1f), CompareMode::reltol(1e-6));
    CHECK_FALSE(r.ok);
    CHECK(r.worst_index == 0);
    CHECK(r.worst_tensor == "y");
    CHECK(r.worst_error == doctest::Approx(0.1 / 1.1).epsilon(1e-6));
  }

  TEST_CASE("NaN only matches NaN") {
    CHECK(compareOutputs(one(NAN), one(NAN), CompareMode::reltol(1e-6)).ok);
    CHECK_FALSE(
        compareOutputs(one(NAN), one(1.0f), CompareMode::reltol(1e-6)).ok);
  }

  TEST_CASE("mismatched names are an error") {
    TensorMap other;
    other["z"] = TensorValue({1}, {1.0f});
    CHECK_THROWS_AS(compareOutputs(one(1.0f), other, CompareMode::exact()),
                    std::invalid_argument);
  }
}

TEST_SUITE("execution") {
  TEST_CASE("threaded mode agrees with sequential mode") {
    KernelProgram p = shipped("softmax", {32, 64});
    PipelineSpec spec;
    spec.tiling.sizes = {8};
    spec.heuristic.min_domain_points = 1;
    KernelProgram q = runPipeline(p, spec).back().program;
    for (uint64_t seed = 0; seed < 10; ++seed) {
      TensorMap in = oracle::randomInputs(p, seed);
      ExecOptions threaded;
      threaded.threaded = true;
      CHECK(compareOutputs(interpret(q, in), interpret(q, in, threaded),
                           CompareMode::exact())
                .ok);
    }
  }

  TEST_CASE("the trace records toggles, sub-kernels and tag traffic") {
    KernelProgram q = doubleBufferedGelu();
    TensorMap in;
    in["x"] = TensorValue({4096}, 0.25f);
    ExecTrace tr;
    ExecOptions eo;
    eo.trace = &tr;
    interpret(q, in, eo);
    CHECK(tr.subkernels ==
          std::vector<std::string>{"ping", "pong", "ping", "pong"});
    CHECK(tr.toggle_values == std::vector<int64_t>{0, 1, 0, 1});
    CHECK(tr.annotated("dma_store") == 8); // 4 starts + 4 waits
    int64_t starts = 0, waits = 0;
    for (const auto &[tag, n] : tr.dma_starts)
      starts += n;
    for (const auto &[tag, n] : tr.dma_waits)
      waits += n;
    CHECK(starts == 8);
    CHECK(waits == 8);
  }

  TEST_CASE("reading a buffer before its dma_wait faults") {
    KernelProgram q = doubleBufferedGelu();
    REQUIRE(removeDmaWait(q, 0));
    TensorMap in;
    in["x"] = TensorValue({4096}, 0.25f);
    CHECK_THROWS_WITH_AS(interpret(q, in),
                         doctest::Contains("before its dma_wait"),
                         ExecutionFault);
  }

  TEST_CASE("the committed mutation fixture matches the mutated program") {
    KernelProgram q = doubleBufferedGelu();
    removeDmaWait(q, 0);
    std::ifstream f(TCMC_SOURCE_DIR "/fixtures/gelu_db_dropped_wait.ir");
    std::string text((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    CHECK(printIR(q) == text);
  }

  TEST_CASE("missing or misshapen inputs are rejected") {
    KernelProgram p = shipped("gelu", {8});
    CHECK_THROWS_AS(interpret(p, {}), std::invalid_argument);
    TensorMap in;
    in["x"] = TensorValue({9}, 0.0f);
    CHECK_THROWS_AS(interpret(p, in), std::invalid_argument);
  }
}

TEST_SUITE("tensor files") {
  TEST_CASE("binary round trip") {
    auto dir = std::filesystem::temp_directory_path() / "tcmc_io_test";
    std::filesystem::create_directories(dir);
    TensorValue t({2, 3}, {1.5f, -0.0f, 3e-38f, INFINITY, -7.0f, 1e30f});
    writeTensor((dir / "t").string(), t);
    TensorValue back = readTensor((dir / "t").string());
    CHECK(back.shape == t.shape);
    TensorMap a, b;
    a["t"] = t;
    b["t"] = back;
    CHECK(compareOutputs(a, b, CompareMode::exact()).ok);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("missing files throw") {
    CHECK_THROWS_AS(readTensor("/nonexistent/tcmc/t"), std::runtime_error);
  }

  TEST_CASE("csv rows") {
    auto path = std::filesystem::temp_directory_path() / "tcmc_test.csv";
    std::ofstream(path) << "1, 2, 3\n4, 5, 6\n";
    TensorValue t = loadCsv(path.string());
    CHECK(t.shape == std::vector<int64_t>{2, 3});
    CHECK(t.data[5] == 6.0f);
    std::ofstream(path) << "0.5,0.25\n";
    CHECK(loadCsv(path.string()).shape == std::vector<int64_t>{2});
    std::filesystem::remove(path);
  }
}
