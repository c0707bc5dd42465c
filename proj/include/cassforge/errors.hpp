// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cassforge {

/// Bad arguments, shape mismatches, malformed files or configs.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values produced during a computation (NaN loss and friends).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem and stream failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

}  // namespace cassforge
