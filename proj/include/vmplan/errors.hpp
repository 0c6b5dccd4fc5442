// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace vmplan {

// Base class for all vmplan failures.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad argument values (out-of-domain batch sizes, non-positive times, ...).
struct DomainError : Error {
  using Error::Error;
};

// Schema or reference problems: unknown vm_type_id, missing profile entry,
// malformed files. Distinct from constraint violations, which are data.
struct StructuralError : Error {
  using Error::Error;
};

// File I/O and parse failures; the message carries the offending path.
struct IoError : Error {
  using Error::Error;
};

}  // namespace vmplan
