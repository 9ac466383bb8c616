//===- pass.h - Common pass declarations ------------------------*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_PASS_H
#define TCMC_PASS_H

#include <stdexcept>
#include <string>

namespace tcmc {

/// A pass was asked to do something its contract forbids.
class PassError : public std::runtime_error {
public:
  explicit PassError(const std::string &msg) : std::runtime_error(msg) {}
};

} // namespace tcmc

#endif // TCMC_PASS_H
