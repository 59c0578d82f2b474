// Copyright 2026 The cvro Authors
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

#ifndef CVRO_ERRORS_HPP_
#define CVRO_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace cvro {

// Malformed input text; `line()` is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Well-formed input that breaks a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad numeric parameter passed to an operation.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Degenerate arrival-bound inputs (zero or negative denominators).
class DegenerateCycleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace cvro

#endif  // CVRO_ERRORS_HPP_
