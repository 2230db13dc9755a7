// Copyright 2026 The medsafe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

namespace medsafe {

/// Root of every exception thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numeric field fell outside its declared range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// An operation was called with inputs that violate its precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line()` is 1-based, 0 when not line oriented.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateIdError : public Error {
 public:
  DuplicateIdError(std::size_t line, std::string id)
      : Error("line " + std::to_string(line) + ": duplicate query id '" + id + "'"),
        line_(line),
        id_(std::move(id)) {}
  [[nodiscard]] std::size_t line() const noexcept { return line_; }
  [[nodiscard]] const std::string& id() const noexcept { return id_; }

 private:
  std::size_t line_;
  std::string id_;
};

/// Strict-mode dataset load found unequal per-principle counts.
class BalanceError : public Error {
 public:
  BalanceError(const std::string& what, std::map<int, std::size_t> counts)
      : Error(what), counts_(std::move(counts)) {}
  [[nodiscard]] const std::map<int, std::size_t>& counts() const noexcept { return counts_; }

 private:
  std::map<int, std::size_t> counts_;
};

// Agent adapter failures.

class TransportError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

class MalformedResponseError : public Error {
 public:
  using Error::Error;
};

class MissingTrajectoryError : public Error {
 public:
  using Error::Error;
};

// Metrics and reporting.

class MissingGeneratorError : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

// Run store.

class StorageError : public Error {
 public:
  using Error::Error;
};

class UnknownRunError : public Error {
 public:
  using Error::Error;
};

/// Append attempted on a run whose manifest is Complete.
class SealedRunError : public UnknownRunError {
 public:
  using UnknownRunError::UnknownRunError;
};

class ConfigMismatchError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration (CLI config file or LoopConfig wiring).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace medsafe
