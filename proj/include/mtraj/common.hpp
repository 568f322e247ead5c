// Copyright 2026 The mtraj Authors
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

#ifndef MTRAJ__COMMON_HPP_
#define MTRAJ__COMMON_HPP_

#include <cstdint>
#include <cstdio>
#include <initializer_list>
#include <iostream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mtraj
{

/// Operand shapes do not fit the operation.
class DimensionError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain (log of non-positive, division by zero, ...).
class DomainError : public std::domain_error
{
public:
  using std::domain_error::domain_error;
};

/// A forward value became NaN or Inf.
class NumericError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// API misuse (non-scalar loss, backward on a non-recording tape, ...).
class UsageError : public std::logic_error
{
public:
  using std::logic_error::logic_error;
};

/// Invalid configuration value.
class ConfigError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file; `what()` carries the line number when known.
class ParseError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Structurally valid input that violates a data invariant.
class ValidationError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

namespace logging
{

namespace detail
{
inline thread_local std::vector<std::string> * capture_sink = nullptr;
inline bool & quiet()
{
  static bool q = false;
  return q;
}
}  // namespace detail

inline void warn(std::string_view message)
{
  if (detail::capture_sink != nullptr) {
    detail::capture_sink->emplace_back(message);
    return;
  }
  if (!detail::quiet()) {
    std::cerr << "warning: " << message << '\n';
  }
}

inline void info(std::string_view message)
{
  if (detail::capture_sink == nullptr && !detail::quiet()) {
    std::cerr << message << '\n';
  }
}

/// Silences stderr warnings process-wide (used by long-running harnesses).
inline void set_quiet(bool q) { detail::quiet() = q; }

/// Collects warnings emitted on this thread while alive instead of printing them.
class WarningCapture
{
public:
  WarningCapture() : previous_(detail::capture_sink) { detail::capture_sink = &messages_; }
  ~WarningCapture() { detail::capture_sink = previous_; }
  WarningCapture(const WarningCapture &) = delete;
  WarningCapture & operator=(const WarningCapture &) = delete;

  const std::vector<std::string> & messages() const { return messages_; }
  bool contains(std::string_view needle) const
  {
    for (const auto & m : messages_) {
      if (m.find(needle) != std::string::npos) {
        return true;
      }
    }
    return false;
  }

private:
  std::vector<std::string> messages_;
  std::vector<std::string> * previous_;
};

}  // namespace logging

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a path of indices.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path)
{
  std::uint64_t s = splitmix64(base);
  for (auto p : path) {
    s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  }
  return s;
}

inline std::uint64_t fnv1a(std::string_view text)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Round-trip decimal for a double (17 significant digits).
inline std::string format_double(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace mtraj

#endif  // MTRAJ__COMMON_HPP_
