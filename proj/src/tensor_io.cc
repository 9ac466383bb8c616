//===- tensor_io.cc - Tensor comparison and file formats ------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/interpreter.h"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace tcmc {

std::string CompareReport::str() const {
  if (ok)
    return "match";
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%lld mismatches; worst %s[%lld]: %.9g vs %.9g (error %.3g)",
                static_cast<long long>(mismatches), worst_tensor.c_str(),
                static_cast<long long>(worst_index), worst_a, worst_b,
                worst_error);
  return buf;
}

CompareReport compareOutputs(const TensorMap &a, const TensorMap &b,
                             CompareMode mode) {
  if (a.size() != b.size())
    throw std::invalid_argument("compared outputs have different names");
  CompareReport r;
  for (const auto &[name, ta] : a) {
    auto it = b.find(name);
    if (it == b.end())
      throw std::invalid_argument("output '" + name + "' missing");
    const TensorValue &tb = it->second;
    if (ta.shape != tb.shape)
      throw std::invalid_argument("shape mismatch for output '" + name + "'");
    for (size_t i = 0; i < ta.data.size(); ++i) {
      float x = ta.data[i], y = tb.data[i];
      double err;
      bool bad;
      if (mode.bitexact) {
        bad = std::bit_cast<uint32_t>(x) != std::bit_cast<uint32_t>(y);
        err = bad ? std::fabs(double(x) - double(y)) : 0.0;
        if (bad && std::isnan(err))
          err = std::numeric_limits<double>::infinity();
      } else if (std::isnan(x) || std::isnan(y)) {
        bad = std::isnan(x) != std::isnan(y);
        err = bad ? std::numeric_limits<double>::infinity() : 0.0;
      } else if (x == y) {
        bad = false;
        err = 0.0;
      } else {
        double scale =
            std::max({std::fabs(double(x)), std::fabs(double(y)), 1e-30});
        err = std::fabs(double(x) - double(y)) / scale;
        bad = !(err <= mode.tol);
      }
      if (!bad)
        continue;
      ++r.mismatches;
      if (r.ok || err > r.worst_error) {
        r.ok = false;
        r.worst_tensor = name;
        r.worst_index = static_cast<int64_t>(i);
        r.worst_a = x;
        r.worst_b = y;
        r.worst_error = err;
      }
    }
  }
  return r;
}

void writeTensor(const std::string &stem, const TensorValue &t) {
  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin)
    throw std::runtime_error("cannot write " + stem + ".bin");
  for (float v : t.data) {
    uint32_t bits = std::bit_cast<uint32_t>(v);
    unsigned char bytes[4] = {static_cast<unsigned char>(bits),
                              static_cast<unsigned char>(bits >> 8),
                              static_cast<unsigned char>(bits >> 16),
                              static_cast<unsigned char>(bits >> 24)};
    bin.write(reinterpret_cast<const char *>(bytes), 4);
  }
  std::ofstream shape(stem + ".shape");
  for (size_t i = 0; i < t.shape.size(); ++i)
    shape << (i ? " " : "") << t.shape[i];
  shape << "\n";
}

TensorValue readTensor(const std::string &stem) {
  std::ifstream shape_in(stem + ".shape");
  if (!shape_in)
    throw std::runtime_error("cannot read " + stem + ".shape");
  std::vector<int64_t> shape;
  int64_t e;
  while (shape_in >> e)
    shape.push_back(e);
  if (shape.empty())
    throw std::runtime_error(stem + ".shape is empty");

  TensorValue t(shape);
  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin)
    throw std::runtime_error("cannot read " + stem + ".bin");
  for (float &v : t.data) {
    unsigned char b[4];
    if (!bin.read(reinterpret_cast<char *>(b), 4))
      throw std::runtime_error(stem + ".bin is shorter than its shape");
    v = std::bit_cast<float>(uint32_t(b[0]) | uint32_t(b[1]) << 8 |
                             uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24);
  }
  if (bin.peek() != std::char_traits<char>::eof())
    throw std::runtime_error(stem + ".bin is longer than its shape");
  return t;
}

TensorValue loadCsv(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot read " + path);
  std::vector<float> data;
  int64_t rows = 0, cols = -1;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    std::stringstream ss(line);
    std::string cell;
    int64_t n = 0;
    while (std::getline(ss, cell, ',')) {
      data.push_back(std::stof(cell));
      ++n;
    }
    if (cols >= 0 && n != cols)
      throw std::runtime_error(path + ": ragged rows");
    cols = n;
    ++rows;
  }
  if (rows == 0)
    throw std::runtime_error(path + ": no data");
  if (rows == 1)
    return TensorValue({cols}, std::move(data));
  return TensorValue({rows, cols}, std::move(data));
}

} // namespace tcmc
