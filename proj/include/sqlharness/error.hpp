//
// Copyright 2026 The sqlharness Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#pragma once

#include <stdexcept>
#include <string>

namespace sqlharness {

inline constexpr const char* kVersion = "0.3.0";

// Root of every exception thrown by the harness.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user configuration: unknown format tag, invalid flag value, bad template.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (task files, trajectory files, gold SQL
// that does not execute).
class DatasetError : public Error {
 public:
  using Error::Error;
};

// Database file could not be opened.
class OpenError : public Error {
 public:
  using Error::Error;
};

// Network-level failure talking to a chat endpoint. Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Endpoint answered but the body did not have the expected shape.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace sqlharness
