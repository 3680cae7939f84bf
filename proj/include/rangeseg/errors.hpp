// Copyright (c) 2026 The rangeseg Authors
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

#include <stdexcept>
#include <string>

namespace rangeseg
{

/// Malformed scan, label or checkpoint file.
class FormatError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent or out-of-range configuration.
class ConfigError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit the operation.
class ShapeError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Numerically impossible input (zero-range point, empty normalization set, ...).
class DomainError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failure, always carrying the offending path.
class IoError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

}  // namespace rangeseg
