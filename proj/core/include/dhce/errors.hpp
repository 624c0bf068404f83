// Copyright 2026 The DHCE Authors.
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

#ifndef DHCE_ERRORS_HPP_
#define DHCE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace dhce {

// Root of every error the library throws. The CLI maps the subclasses onto
// process exit codes (usage 1, data 2, numeric 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or invocation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data, including checkpoint files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Shape mismatches, domain violations and non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Failure talking to a remote text encoder.
class EncoderError : public Error {
 public:
  EncoderError(const std::string& what, bool retriable)
      : Error(what), retriable_(retriable) {}

  bool retriable() const noexcept { return retriable_; }

 private:
  bool retriable_;
};

}  // namespace dhce

#endif  // DHCE_ERRORS_HPP_
