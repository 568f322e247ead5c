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

// Gradient-check fixtures shared by the unit suites and the acceptance run.

#ifndef MTRAJ_TESTS__GRADIENT_CASES_HPP_
#define MTRAJ_TESTS__GRADIENT_CASES_HPP_

#include <string>
#include <utility>
#include <vector>

#include "support.hpp"

namespace mtraj::testing
{

struct Primitive
{
  std::string name;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  ScalarFn fn;
  /// Inputs drawn from (0.5, 2) instead of (-1, 1).
  bool positive = false;
};

// Every primitive is followed by a fixed random projection so that the
// scalar objective weighs each output coordinate differently.
inline Var weigh(Var y, std::uint64_t seed)
{
  Array w = random_array(y.rows(), y.cols(), seed ^ 0x77);
  return sum(mul_const(y, w));
}

inline std::vector<Primitive> primitive_catalog()
{
  std::vector<Primitive> c;
  c.push_back({"matmul", {{3, 4}, {4, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(matmul(v[0], v[1]), 1); }});
  c.push_back({"add", {{3, 2}, {3, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(add(v[0], v[1]), 2); }});
  c.push_back({"sub", {{3, 2}, {3, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(sub(v[0], v[1]), 3); }});
  c.push_back({"mul", {{3, 2}, {3, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(mul(v[0], v[1]), 4); }});
  c.push_back({"div", {{3, 2}, {3, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(div(v[0], v[1]), 5); }, true});
  c.push_back({"broadcast_rows", {{1, 3}}, [](Tape &, const std::vector<Var> & v) { return weigh(broadcast_rows(v[0], 4), 6); }});
  c.push_back({"concat_cols", {{2, 2}, {2, 3}}, [](Tape &, const std::vector<Var> & v) { return weigh(concat_cols({v[0], v[1]}), 7); }});
  c.push_back({"concat_rows", {{2, 3}, {1, 3}}, [](Tape &, const std::vector<Var> & v) { return weigh(concat_rows({v[0], v[1]}), 8); }});
  c.push_back({"slice_cols", {{3, 5}}, [](Tape &, const std::vector<Var> & v) { return weigh(slice_cols(v[0], 1, 4), 9); }});
  c.push_back({"slice_rows", {{4, 3}}, [](Tape &, const std::vector<Var> & v) { return weigh(slice_rows(v[0], 1, 3), 10); }});
  c.push_back({"gather_rows", {{3, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(gather_rows(v[0], {2, 0, 2, 1}), 11); }});
  c.push_back({"transpose", {{2, 3}}, [](Tape &, const std::vector<Var> & v) { return weigh(transpose(v[0]), 12); }});
  c.push_back({"reshape", {{2, 6}}, [](Tape &, const std::vector<Var> & v) { return weigh(reshape(v[0], 3, 4), 13); }});
  c.push_back({"sum", {{3, 3}}, [](Tape &, const std::vector<Var> & v) { return scale(sum(square(v[0])), 0.7); }});
  c.push_back({"mean", {{3, 3}}, [](Tape &, const std::vector<Var> & v) { return mean(square(v[0])); }});
  c.push_back({"sum_axis0", {{3, 4}}, [](Tape &, const std::vector<Var> & v) { return weigh(sum_axis(v[0], 0), 14); }});
  c.push_back({"sum_axis1", {{3, 4}}, [](Tape &, const std::vector<Var> & v) { return weigh(sum_axis(v[0], 1), 15); }});
  c.push_back({"mean_axis0", {{3, 4}}, [](Tape &, const std::vector<Var> & v) { return weigh(mean_axis(v[0], 0), 16); }});
  c.push_back({"mean_axis1", {{3, 4}}, [](Tape &, const std::vector<Var> & v) { return weigh(mean_axis(v[0], 1), 17); }});
  c.push_back({"exp", {{3, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(exp(v[0]), 18); }});
  c.push_back({"log", {{3, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(log(v[0]), 19); }, true});
  c.push_back({"sigmoid", {{3, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(sigmoid(v[0]), 20); }});
  c.push_back({"tanh", {{3, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(tanh(v[0]), 21); }});
  c.push_back({"square", {{3, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(square(v[0]), 22); }});
  c.push_back({"scale", {{3, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(scale(v[0], -1.7), 23); }});
  c.push_back({"add_scalar", {{3, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(square(add_scalar(v[0], 0.3)), 24); }});
  c.push_back({"softmax_rows", {{3, 4}}, [](Tape &, const std::vector<Var> & v) { return weigh(softmax_rows(v[0]), 25); }});
  c.push_back({"log_softmax_rows", {{3, 4}}, [](Tape &, const std::vector<Var> & v) { return weigh(log_softmax_rows(v[0]), 26); }});
  c.push_back({"l2_normalize_rows", {{3, 4}}, [](Tape &, const std::vector<Var> & v) { return weigh(l2_normalize_rows(v[0]), 27); }});
  c.push_back({"grouped_scores", {{6, 3}, {6, 3}}, [](Tape &, const std::vector<Var> & v) { return weigh(grouped_scores(v[0], v[1], 3), 28); }});
  c.push_back({"grouped_mix", {{6, 3}, {6, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(grouped_mix(v[0], v[1], 3), 29); }});
  c.push_back({"one_minus", {{3, 2}}, [](Tape &, const std::vector<Var> & v) { return weigh(one_minus(v[0]), 30); }});
  return c;
}

inline std::vector<Array> primitive_inputs(const Primitive & prim, std::uint64_t seed)
{
  std::vector<Array> theta;
  for (std::size_t k = 0; k < prim.shapes.size(); ++k) {
    const auto [r, c] = prim.shapes[k];
    theta.push_back(
      prim.positive ? random_array(r, c, derive_seed(seed, {k}), 0.5, 2.0)
                    : random_array(r, c, derive_seed(seed, {k})));
  }
  return theta;
}

/// Two scenes of three agents, d = 4, two heads; tokens are a parameter too.
inline StoreGradReport adapter_gradients(AdapterVariant v, std::uint64_t seed)
{
  ParamStore s;
  add_adapter_params(s, AdapterDims{4, 2, 2, 3}, v, seed);
  s.add("input.z", Array::zeros(6, 4));
  randomize(s, seed);
  const Array weights = random_array(6, 4, seed + 1000);
  const std::vector<std::size_t> roles = {0, 1, 1, 0, 1, 1}, domains = {0, 0, 0, 2, 2, 2};
  return check_store_gradients(s, [&](Binding & p) {
    AdapterOutput o = adapter_forward(p, p("input.z"), roles, domains, 3, v, 2);
    return sum(mul_const(o.z_adapted, weights));
  });
}

/// Seven rows over three domains; odd seeds use a hidden layer in the heads.
inline StoreGradReport hierarchical_gradients(ContrastiveVariant v, std::uint64_t seed)
{
  const std::vector<std::size_t> roles = {0, 1, 1, 0, 1, 1, 1}, domains = {0, 0, 0, 1, 1, 1, 2};
  ParamStore s;
  add_projection_params(s, ProjectionDims{6, 4, seed % 2 == 0 ? 0u : 5u}, v, seed);
  s.add("input.z", Array::zeros(7, 6));
  randomize(s, seed, 0.8);
  return check_store_gradients(s, [&](Binding & p) {
    return hierarchical_loss(p, p("input.z"), roles, domains, 0.5, 0.7, v).total;
  });
}

/// Scene of `agents` random tracks over `steps` with the second half hidden.
inline SceneSequence toy_scene(std::uint64_t seed, std::size_t agents, std::size_t steps,
  const std::string & domain = "basketball")
{
  std::vector<std::vector<std::pair<double, double>>> tracks;
  for (std::size_t i = 0; i < agents; ++i) {
    Rng rng(derive_seed(seed, {i}));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::pair<double, double>> t;
    for (std::size_t k = 0; k < steps; ++k) {
      t.emplace_back(u(rng), u(rng));
    }
    tracks.push_back(std::move(t));
  }
  SceneSequence s = make_scene(tracks, domain);
  for (std::size_t i = 0; i < s.agents; ++i) {
    for (std::size_t t = s.steps / 2; t < s.steps; ++t) {
      s.mask[i * s.steps + t] = 0;
    }
  }
  return s;
}

/// N = 3, T = 6, d_z = 8, K = 2; two scenes from different domains.
inline ModelConfig pipeline_config()
{
  ModelConfig c = tiny_model(6);
  c.d_z = 8;
  c.temperature = 0.5;
  return c;
}

/// Total loss through encode, adapt, contrast and decode.
inline StoreGradReport pipeline_gradients(std::uint64_t seed)
{
  const ModelConfig c = pipeline_config();
  const SceneSequence a = toy_scene(seed, 3, 6, "basketball");
  const SceneSequence b = toy_scene(seed + 100, 3, 6, "soccer");
  const Batch batch = make_batch({&a, &b}, c);
  ParamStore s = init_model(c, seed);
  randomize(s, seed, 0.4);
  const LossWeights w;
  return check_store_gradients(s, [&](Binding & p) {
    return forward_loss(p, c, batch, w, 2, seed).losses.total_var;
  });
}

}  // namespace mtraj::testing

#endif  // MTRAJ_TESTS__GRADIENT_CASES_HPP_
