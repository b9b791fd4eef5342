// Copyright 2026 The errcalc Authors
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
#include <stdexcept>
#include <string>

namespace errcalc {

/// Invalid input supplied by the caller: malformed expressions, dimension
/// mismatches, non-PSD covariances, bad configuration.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical failure while evaluating an otherwise valid model.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : ValidationError(what + " at line " + std::to_string(line) +
                        ", column " + std::to_string(column)),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class SyntaxError : public ParseError {
 public:
  using ParseError::ParseError;
};

class UnknownIdentifierError : public ParseError {
 public:
  using ParseError::ParseError;
};

class ArityError : public ParseError {
 public:
  using ParseError::ParseError;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Evaluation left the domain of a node (log of a non-positive value,
/// division by zero, ...). Carries the printed node and the offending value.
class DomainError : public NumericalError {
 public:
  DomainError(const std::string& what, std::string node, double value)
      : NumericalError(what + " in '" + node + "' (argument " +
                       std::to_string(value) + ")"),
        node_(std::move(node)),
        value_(value) {}

  const std::string& node() const noexcept { return node_; }
  double value() const noexcept { return value_; }

 private:
  std::string node_;
  double value_;
};

}  // namespace errcalc
