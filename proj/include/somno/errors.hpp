#pragma once

#include <stdexcept>
#include <string>

namespace somno {

/// Base class for every error the toolkit raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input: bad files, bad arguments, broken invariants.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input on which the requested computation is empty or infeasible
/// (no sleep, single-class cohort, unreachable target, ...).
class ComputeError : public Error {
 public:
  using Error::Error;
};

}  // namespace somno
