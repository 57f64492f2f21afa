// Copyright 2026 The mlpbank Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace mlpbank {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An index value falls outside the addressed extent.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Activation segments or model slices do not partition the hidden axis.
class LayoutError : public Error {
 public:
  using Error::Error;
};

// Invalid input to bank or grid construction.
class BuildError : public Error {
 public:
  using Error::Error;
};

// A forward cache was used with a bank or model it was not produced by.
class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed bank spec or CSV input. The message carries line/field context.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace mlpbank
