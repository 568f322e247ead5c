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

// Shared fixtures for the unit suites.

#ifndef MTRAJ_TESTS__SUPPORT_HPP_
#define MTRAJ_TESTS__SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "mtraj/mtraj.hpp"

namespace mtraj::testing
{

inline Array random_array(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
{
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Array a = Array::zeros(rows, cols);
  for (auto & v : a.data()) {
    v = dist(rng);
  }
  return a;
}

/// Overwrites every parameter with U(-scale, scale) so that zero-initialized
/// layers do not hide gradient paths.
inline void randomize(ParamStore & store, std::uint64_t seed, double scale = 0.5)
{
  for (std::size_t i = 0; i < store.size(); ++i) {
    Array & a = store.value(i);
    a = random_array(a.rows(), a.cols(), derive_seed(seed, {i}), -scale, scale);
  }
}

struct StoreGradReport
{
  double max_rel_err = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Loss built from a parameter binding; must be deterministic.
using StoreLoss = std::function<Var(Binding &)>;

/// Reverse-mode gradients of `loss` w.r.t. every parameter in `store` against
/// central differences. Relative error is |a - n| / max(floor, |a| + |n|),
/// where floor = 4 eps * max(1, |f|) / (h * tol): each evaluation of f carries
/// up to ~2 ulp of round-off, so smaller gradients cannot be resolved to `tol`
/// by a central difference of step h.
inline StoreGradReport check_store_gradients(
  const ParamStore & store, const StoreLoss & loss, double h = 1e-5, double tol = 1e-4)
{
  std::vector<Array> analytic;
  double f0 = 0.0;
  {
    Tape tape;
    Binding p(tape, store);
    Var out = loss(p);
    f0 = out.item();
    tape.backward(out);
    analytic = p.gradients();
  }
  auto eval = [&](const ParamStore & s) {
    Tape tape(false);
    Binding p(tape, s);
    return loss(p).item();
  };
  const double floor =
    std::max(1e-8, 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f0)) / (h * tol));
  StoreGradReport report;
  ParamStore work = store;
  for (std::size_t k = 0; k < store.size(); ++k) {
    for (std::size_t i = 0; i < store.value(k).size(); ++i) {
      const double orig = work.value(k)[i];
      work.value(k)[i] = orig + h;
      const double fp = eval(work);
      work.value(k)[i] = orig - h;
      const double fm = eval(work);
      work.value(k)[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      ++report.checked;
      const double rel = std::abs(a - numeric) / std::max(floor, std::abs(a) + std::abs(numeric));
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = store.name(k) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

/// Scene with explicit tracks. `tracks[i]` is T (x, y) pairs; agent 0 is the ball.
inline SceneSequence make_scene(
  const std::vector<std::vector<std::pair<double, double>>> & tracks, const std::string & domain = "basketball",
  FieldBounds bounds = FieldBounds::unit())
{
  SceneSequence s;
  s.agents = tracks.size();
  s.steps = tracks.front().size();
  s.domain = domain;
  s.units = "normalized";
  s.bounds = bounds;
  s.source_bounds = bounds;
  for (std::size_t i = 0; i < s.agents; ++i) {
    for (const auto & [x, y] : tracks[i]) {
      s.xy.push_back(x);
      s.xy.push_back(y);
    }
    s.roles.push_back(i == 0 ? Role::ball : Role::player);
    s.teams.push_back(i == 0 ? Team::none : (i % 2 == 1 ? Team::offense : Team::defense));
  }
  s.mask.assign(s.agents * s.steps, 1);
  return s;
}

/// Small normalized multi-domain dataset.
inline Dataset tiny_dataset(std::size_t per_domain, std::size_t agents, std::size_t steps, std::uint64_t seed,
  const std::vector<std::string> & domains = {"basketball", "football", "soccer"})
{
  std::vector<Dataset> parts;
  for (const auto & d : domains) {
    parts.push_back(normalize(generate_synthetic(profile_by_name(d), per_domain, agents, steps, seed)));
  }
  return merge_unified(parts);
}

inline ModelConfig tiny_model(std::size_t steps = 6)
{
  ModelConfig m;
  m.steps = steps;
  m.d_model = 8;
  m.d_z = 8;
  m.encoder_heads = 2;
  m.adapter_heads = 2;
  m.d_p = 4;
  return m;
}

inline TrainConfig tiny_train(std::size_t steps = 6)
{
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.k_train = 2;
  c.model = tiny_model(steps);
  c.checkpoint_every = 1;
  return c;
}

/// Fresh empty directory under the system temp dir.
inline std::string scratch_dir(const std::string & name)
{
  const auto p = std::filesystem::temp_directory_path() / ("mtraj_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string read_file(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace mtraj::testing

#endif  // MTRAJ_TESTS__SUPPORT_HPP_
