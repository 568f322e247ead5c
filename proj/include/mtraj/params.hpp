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

#ifndef MTRAJ__PARAMS_HPP_
#define MTRAJ__PARAMS_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mtraj/common.hpp"
#include "mtraj/numerics.hpp"

namespace mtraj
{

/// Named learnable arrays, kept in insertion order. Paths look like `encoder.gru.w_ih`.
class ParamStore
{
public:
  void add(std::string name, Array value)
  {
    if (index_.count(name) != 0) {
      throw UsageError("ParamStore: duplicate parameter " + name);
    }
    index_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  std::size_t index_of(std::string_view name) const
  {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) {
      throw UsageError("ParamStore: unknown parameter " + std::string(name));
    }
    return it->second;
  }

  const Array & at(std::string_view name) const { return values_[index_of(name)]; }
  Array & at(std::string_view name) { return values_[index_of(name)]; }

  std::size_t size() const { return names_.size(); }
  const std::string & name(std::size_t i) const { return names_[i]; }
  const Array & value(std::size_t i) const { return values_[i]; }
  Array & value(std::size_t i) { return values_[i]; }
  const std::vector<std::string> & names() const { return names_; }

  std::size_t scalar_count() const
  {
    std::size_t n = 0;
    for (const auto & v : values_) {
      n += v.size();
    }
    return n;
  }

  friend bool operator==(const ParamStore & a, const ParamStore & b)
  {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

private:
  std::vector<std::string> names_;
  std::vector<Array> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Binds a ParamStore to a tape for one forward pass. Leaves are created on
/// first use, so parameters a configuration never touches stay unbound.
class Binding
{
public:
  Binding(Tape & tape, const ParamStore & store)
  : tape_(tape), store_(store), vars_(store.size()), bound_(store.size(), false)
  {
  }

  Var operator()(std::string_view name)
  {
    const std::size_t i = store_.index_of(name);
    if (!bound_[i]) {
      vars_[i] = tape_.recording() ? tape_.leaf(store_.value(i)) : tape_.constant(store_.value(i));
      bound_[i] = true;
    }
    return vars_[i];
  }

  Tape & tape() { return tape_; }
  const ParamStore & store() const { return store_; }

  /// Gradients after `tape().backward(...)`, aligned with the store.
  std::vector<Array> gradients() const
  {
    std::vector<Array> out;
    out.reserve(store_.size());
    for (std::size_t i = 0; i < store_.size(); ++i) {
      out.push_back(bound_[i] ? tape_.gradient(vars_[i]) : Array(store_.value(i).shape(), 0.0));
    }
    return out;
  }

  /// Structural reachability of each parameter from the last backward's loss.
  std::vector<bool> reached() const
  {
    std::vector<bool> out(store_.size(), false);
    for (std::size_t i = 0; i < store_.size(); ++i) {
      out[i] = bound_[i] && tape_.reached(vars_[i]);
    }
    return out;
  }

private:
  Tape & tape_;
  const ParamStore & store_;
  std::vector<Var> vars_;
  std::vector<bool> bound_;
};

/// x W + b with W = `<prefix>.w`, b = `<prefix>.b`.
inline Var linear(Binding & p, const std::string & prefix, Var x)
{
  Var y = matmul(x, p(prefix + ".w"));
  return add(y, broadcast_rows(p(prefix + ".b"), y.rows()));
}

namespace init
{

/// Each parameter draws from its own stream keyed by (seed, path), so values
/// do not depend on which other parameters a configuration creates.
inline Rng stream(std::uint64_t seed, std::string_view path)
{
  return Rng(derive_seed(seed, {fnv1a(path)}));
}

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Array uniform_fan_in(std::size_t rows, std::size_t cols, std::uint64_t seed, std::string_view path)
{
  Rng rng = stream(seed, path);
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Array a = Array::zeros(rows, cols);
  for (auto & v : a.data()) {
    v = dist(rng);
  }
  return a;
}

inline Array normal(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed, std::string_view path)
{
  Rng rng = stream(seed, path);
  std::normal_distribution<double> dist(0.0, stddev);
  Array a = Array::zeros(rows, cols);
  for (auto & v : a.data()) {
    v = dist(rng);
  }
  return a;
}

/// Adds `<prefix>.w` (in x out, fan-in uniform) and a zero bias `<prefix>.b`.
inline void add_linear(ParamStore & store, const std::string & prefix, std::size_t in, std::size_t out, std::uint64_t seed)
{
  store.add(prefix + ".w", uniform_fan_in(in, out, seed, prefix + ".w"));
  store.add(prefix + ".b", Array::zeros(1, out));
}

/// Linear layer with both weight and bias zeroed.
inline void add_zero_linear(ParamStore & store, const std::string & prefix, std::size_t in, std::size_t out)
{
  store.add(prefix + ".w", Array::zeros(in, out));
  store.add(prefix + ".b", Array::zeros(1, out));
}

}  // namespace init

}  // namespace mtraj

#endif  // MTRAJ__PARAMS_HPP_
