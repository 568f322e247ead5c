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

#ifndef MTRAJ__MODEL_HPP_
#define MTRAJ__MODEL_HPP_

// Masked-trajectory CVAE.
//
//   encoder    per step [x, y, m, team one-hot] -> linear -> GRU over time,
//              then one multi-head self-attention layer across the agents of
//              each scene (residual).
//   posterior  mu = Linear(h), sigma = exp(0.5 * Linear(h)).
//   adapter    on the latent z (default) or on h.
//   decoder    cond = tanh(Linear(h)); tanh(Linear([z', cond])) -> Linear ->
//              T x 2 offsets added to an interpolation of the observed steps.
//
// A batch stacks the agents of several scenes as rows (scene-major), so every
// cross-agent operation works on contiguous groups of `agents` rows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtraj/adapter.hpp"
#include "mtraj/common.hpp"
#include "mtraj/contrastive.hpp"
#include "mtraj/data.hpp"
#include "mtraj/losses.hpp"
#include "mtraj/numerics.hpp"
#include "mtraj/params.hpp"

namespace mtraj
{

enum class AdapterPlacement { post_latent, post_encoder };

inline std::string to_string(AdapterPlacement p)
{
  return p == AdapterPlacement::post_latent ? "post_latent" : "post_encoder";
}

inline AdapterPlacement parse_adapter_placement(const std::string & s)
{
  if (s == "post_latent") {
    return AdapterPlacement::post_latent;
  }
  if (s == "post_encoder") {
    return AdapterPlacement::post_encoder;
  }
  throw ConfigError("unknown adapter placement '" + s + "'");
}

/// Number of per-step encoder input features: x, y, mask, team one-hot.
inline constexpr std::size_t kStepFeatures = 3 + kTeamCount;

struct ModelConfig
{
  std::size_t steps = 24;
  std::size_t d_model = 32;
  std::size_t d_z = 16;
  std::size_t encoder_heads = 4;
  std::size_t adapter_heads = 4;
  AdapterVariant adapter = AdapterVariant::token_wise;
  AdapterPlacement placement = AdapterPlacement::post_latent;
  /// Keys of the adapter attention: all agents of the scene (true) or the
  /// agent's own latent only (false).
  bool adapter_scene_keys = true;
  ContrastiveVariant contrastive = ContrastiveVariant::hierarchical;
  std::size_t d_p = 16;
  std::size_t proj_hidden = 0;
  double temperature = 0.1;
  /// Contrastive terms read the adapted posterior mean (true) or the adapted
  /// sample (false). Only meaningful for post_latent placement.
  bool contrast_on_mean = true;
  /// Domain vocabulary of the adapter embedding table.
  std::vector<std::string> domains = {"basketball", "football", "soccer"};
  /// Whether the domain projection head exists (off for single-domain training).
  bool domain_head = true;

  std::size_t adapter_dim() const
  {
    return placement == AdapterPlacement::post_latent ? d_z : d_model;
  }

  std::size_t domain_id(const std::string & name) const
  {
    auto it = std::find(domains.begin(), domains.end(), name);
    if (it == domains.end()) {
      throw VocabularyError("domain '" + name + "' is not in the model vocabulary");
    }
    return static_cast<std::size_t>(it - domains.begin());
  }

  void validate() const
  {
    if (steps < 2 || d_model == 0 || d_z == 0 || d_p == 0) {
      throw ConfigError("model: steps >= 2 and non-zero dimensions required");
    }
    if (encoder_heads == 0 || d_model % encoder_heads != 0) {
      throw ConfigError("model: d_model must be divisible by encoder_heads");
    }
    if (adapter != AdapterVariant::bypass && (adapter_heads == 0 || adapter_dim() % adapter_heads != 0)) {
      throw ConfigError("model: adapter width must be divisible by adapter_heads");
    }
    if (!(temperature > 0.0)) {
      throw ConfigError("model: temperature must be > 0");
    }
    if (domains.empty()) {
      throw ConfigError("model: empty domain vocabulary");
    }
  }
};

inline nlohmann::json to_json(const ModelConfig & c)
{
  return {
    {"steps", c.steps},
    {"d_model", c.d_model},
    {"d_z", c.d_z},
    {"encoder_heads", c.encoder_heads},
    {"adapter_heads", c.adapter_heads},
    {"adapter_variant", to_string(c.adapter)},
    {"adapter_placement", to_string(c.placement)},
    {"adapter_scene_keys", c.adapter_scene_keys},
    {"contrastive_variant", to_string(c.contrastive)},
    {"d_p", c.d_p},
    {"proj_hidden", c.proj_hidden},
    {"temperature", c.temperature},
    {"contrast_on_mean", c.contrast_on_mean},
    {"domains", c.domains},
    {"domain_head", c.domain_head},
  };
}

inline ModelConfig model_config_from_json(const nlohmann::json & j)
{
  ModelConfig c;
  c.steps = j.at("steps").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_z = j.at("d_z").get<std::size_t>();
  c.encoder_heads = j.at("encoder_heads").get<std::size_t>();
  c.adapter_heads = j.at("adapter_heads").get<std::size_t>();
  c.adapter = parse_adapter_variant(j.at("adapter_variant").get<std::string>());
  c.placement = parse_adapter_placement(j.at("adapter_placement").get<std::string>());
  c.adapter_scene_keys = j.at("adapter_scene_keys").get<bool>();
  c.contrastive = parse_contrastive_variant(j.at("contrastive_variant").get<std::string>());
  c.d_p = j.at("d_p").get<std::size_t>();
  c.proj_hidden = j.at("proj_hidden").get<std::size_t>();
  c.temperature = j.at("temperature").get<double>();
  c.contrast_on_mean = j.at("contrast_on_mean").get<bool>();
  c.domains = j.at("domains").get<std::vector<std::string>>();
  c.domain_head = j.at("domain_head").get<bool>();
  c.validate();
  return c;
}

/// Fresh parameters for `config`. Each parameter draws from its own stream,
/// so a given path gets the same initial value in every configuration.
inline ParamStore init_model(const ModelConfig & config, std::uint64_t seed)
{
  config.validate();
  const std::size_t d = config.d_model;
  ParamStore s;
  init::add_linear(s, "encoder.input", kStepFeatures, d, seed);
  s.add("encoder.gru.w_ih", init::uniform_fan_in(d, 3 * d, seed, "encoder.gru.w_ih"));
  s.add("encoder.gru.w_hh", init::uniform_fan_in(d, 3 * d, seed, "encoder.gru.w_hh"));
  s.add("encoder.gru.b_ih", Array::zeros(1, 3 * d));
  s.add("encoder.gru.b_hh", Array::zeros(1, 3 * d));
  for (const char * proj : {"q", "k", "v", "o"}) {
    init::add_linear(s, std::string("encoder.attn.") + proj, d, d, seed);
  }
  const std::size_t latent_in = d;
  init::add_linear(s, "posterior.mu", latent_in, config.d_z, seed);
  init::add_linear(s, "posterior.logvar", latent_in, config.d_z, seed);

  AdapterDims ad;
  ad.token_dim = config.adapter_dim();
  ad.heads = config.adapter_heads;
  ad.roles = kRoleCount;
  ad.domains = config.domains.size();
  add_adapter_params(s, ad, config.adapter, seed);

  init::add_linear(s, "decoder.cond", d, d, seed);
  init::add_linear(s, "decoder.hidden", config.d_z + d, d, seed);
  init::add_linear(s, "decoder.out", d, 2 * config.steps, seed);

  ProjectionDims pd;
  pd.input_dim = config.adapter_dim();
  pd.output_dim = config.d_p;
  pd.hidden = config.proj_hidden;
  add_projection_params(s, pd, config.contrastive, seed, config.domain_head);
  return s;
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

/// Per coordinate: linear interpolation between the nearest observed steps,
/// held constant before the first and after the last observation. Observed
/// steps are returned unchanged. `track` is T x 2 interleaved.
inline std::vector<double> observed_interpolation(
  std::span<const double> track, std::span<const std::uint8_t> mask)
{
  const std::size_t steps = mask.size();
  std::vector<double> out(track.begin(), track.end());
  std::vector<std::size_t> seen;
  for (std::size_t t = 0; t < steps; ++t) {
    if (mask[t] != 0) {
      seen.push_back(t);
    }
  }
  if (seen.empty()) {
    std::fill(out.begin(), out.end(), 0.0);
    return out;
  }
  std::size_t next = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    while (next < seen.size() && seen[next] < t) {
      ++next;
    }
    if (next < seen.size() && seen[next] == t) {
      continue;
    }
    for (std::size_t c = 0; c < 2; ++c) {
      if (next == 0) {
        out[2 * t + c] = track[2 * seen.front() + c];
      } else if (next == seen.size()) {
        out[2 * t + c] = track[2 * seen.back() + c];
      } else {
        const std::size_t a = seen[next - 1], b = seen[next];
        const double w = static_cast<double>(t - a) / static_cast<double>(b - a);
        out[2 * t + c] = (1.0 - w) * track[2 * a + c] + w * track[2 * b + c];
      }
    }
  }
  return out;
}

/// Model-ready view of several scenes with equal N and T. Rows are agents,
/// scene-major; per-row arrays are rows x 2T in the (x0, y0, x1, y1, ...) layout.
struct Batch
{
  std::size_t scenes = 0;
  std::size_t agents = 0;
  std::size_t steps = 0;
  /// (steps * rows) x kStepFeatures, step-major; missing coordinates are 0.
  Array inputs;
  Array target;
  Array visible;
  Array missing;
  Array anchor;
  std::vector<std::size_t> roles;
  std::vector<std::size_t> domains;

  std::size_t rows() const { return scenes * agents; }
};

inline Batch make_batch(const std::vector<const SceneSequence *> & scenes, const ModelConfig & config)
{
  if (scenes.empty()) {
    throw UsageError("make_batch: no scenes");
  }
  Batch b;
  b.scenes = scenes.size();
  b.agents = scenes.front()->agents;
  b.steps = scenes.front()->steps;
  if (b.steps != config.steps) {
    throw DimensionError(
      "make_batch: sequences have T=" + std::to_string(b.steps) + " but the model expects T=" +
      std::to_string(config.steps));
  }
  const std::size_t rows = b.rows(), width = 2 * b.steps;
  b.inputs = Array::zeros(b.steps * rows, kStepFeatures);
  b.target = Array::zeros(rows, width);
  b.visible = Array::zeros(rows, width);
  b.missing = Array::zeros(rows, width);
  b.anchor = Array::zeros(rows, width);
  b.roles.reserve(rows);
  b.domains.reserve(rows);
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const SceneSequence & seq = *scenes[s];
    if (seq.agents != b.agents || seq.steps != b.steps) {
      throw DimensionError("make_batch: scenes in a batch must share N and T");
    }
    const std::size_t dom = config.domain_id(seq.domain);
    for (std::size_t i = 0; i < seq.agents; ++i) {
      const std::size_t r = s * b.agents + i;
      b.roles.push_back(static_cast<std::size_t>(seq.roles[i]));
      b.domains.push_back(dom);
      const auto mask = std::span<const std::uint8_t>(seq.mask).subspan(i * b.steps, b.steps);
      const auto anchor = observed_interpolation(seq.track(i), mask);
      for (std::size_t t = 0; t < b.steps; ++t) {
        const bool obs = mask[t] != 0;
        const double x = seq.x(i, t), y = seq.y(i, t);
        double * in = &b.inputs(t * rows + r, 0);
        in[0] = obs ? x : 0.0;
        in[1] = obs ? y : 0.0;
        in[2] = obs ? 1.0 : 0.0;
        in[3 + static_cast<std::size_t>(seq.teams[i])] = 1.0;
        b.target(r, 2 * t) = x;
        b.target(r, 2 * t + 1) = y;
        for (std::size_t c = 0; c < 2; ++c) {
          b.visible(r, 2 * t + c) = obs ? 1.0 : 0.0;
          b.missing(r, 2 * t + c) = obs ? 0.0 : 1.0;
          b.anchor(r, 2 * t + c) = anchor[2 * t + c];
        }
      }
    }
  }
  return b;
}

inline Batch make_batch(const SceneSequence & scene, const ModelConfig & config)
{
  return make_batch(std::vector<const SceneSequence *>{&scene}, config);
}

// ---------------------------------------------------------------------------
// Forward components
// ---------------------------------------------------------------------------

namespace detail
{
/// Multi-head scaled dot-product attention within groups of `group` rows.
inline Var grouped_self_attention(
  Binding & p, const std::string & prefix, Var x, std::size_t group, std::size_t heads)
{
  Var q = linear(p, prefix + ".q", x);
  Var k = linear(p, prefix + ".k", x);
  Var v = linear(p, prefix + ".v", x);
  const std::size_t dh = q.cols() / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> mixed;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = heads == 1 ? k : slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = heads == 1 ? v : slice_cols(v, h * dh, (h + 1) * dh);
    mixed.push_back(grouped_mix(softmax_rows(scale(grouped_scores(qh, kh, group), s)), vh, group));
  }
  return linear(p, prefix + ".o", heads == 1 ? mixed.front() : concat_cols(mixed));
}
}  // namespace detail

/// Per-agent summary h (rows x d_model).
inline Var encode(Binding & p, const ModelConfig & config, const Batch & b)
{
  if (!b.inputs.all_finite()) {
    throw NumericError("encode: non-finite input");
  }
  Tape & tape = p.tape();
  const std::size_t rows = b.rows(), d = config.d_model;
  Var x = linear(p, "encoder.input", tape.constant(b.inputs));
  Var gi_all = add(matmul(x, p("encoder.gru.w_ih")), broadcast_rows(p("encoder.gru.b_ih"), x.rows()));
  Var w_hh = p("encoder.gru.w_hh");
  Var b_hh = broadcast_rows(p("encoder.gru.b_hh"), rows);
  Var h = tape.constant(Array::zeros(rows, d));
  for (std::size_t t = 0; t < b.steps; ++t) {
    Var gi = slice_rows(gi_all, t * rows, (t + 1) * rows);
    Var gh = add(matmul(h, w_hh), b_hh);
    Var r = sigmoid(add(slice_cols(gi, 0, d), slice_cols(gh, 0, d)));
    Var u = sigmoid(add(slice_cols(gi, d, 2 * d), slice_cols(gh, d, 2 * d)));
    Var n = tanh(add(slice_cols(gi, 2 * d, 3 * d), mul(r, slice_cols(gh, 2 * d, 3 * d))));
    h = add(n, mul(u, sub(h, n)));
  }
  return add(h, detail::grouped_self_attention(p, "encoder.attn", h, b.agents, config.encoder_heads));
}

struct Posterior
{
  Var mu;
  Var logvar;
  Var sigma;
};

inline Posterior posterior(Binding & p, Var h)
{
  Posterior q;
  q.mu = linear(p, "posterior.mu", h);
  q.logvar = linear(p, "posterior.logvar", h);
  q.sigma = exp(scale(q.logvar, 0.5));
  return q;
}

/// z = mu + sigma * eps; eps is a constant (no gradient).
inline Var reparameterize(Var mu, Var sigma, const Array & eps)
{
  return add(mu, mul_const(sigma, eps));
}

/// Decoder conditioning: projected encoder features plus the observed-step
/// interpolation the output is added to.
struct Condition
{
  Var features;
  Array anchor;
};

inline Condition condition(Binding & p, Var h, const Batch & b)
{
  return {tanh(linear(p, "decoder.cond", h)), b.anchor};
}

/// Complete trajectories, rows x 2T.
inline Var decode(Binding & p, Var z_adapted, const Condition & cond)
{
  Var hidden = tanh(linear(p, "decoder.hidden", concat_cols({z_adapted, cond.features})));
  return add_const(linear(p, "decoder.out", hidden), cond.anchor);
}

/// Applies the configured adapter to `tokens` (z or h).
inline AdapterOutput adapt(Binding & p, const ModelConfig & config, Var tokens, const Batch & b)
{
  return adapter_forward(
    p, tokens, b.roles, b.domains, config.adapter_scene_keys ? b.agents : 1, config.adapter,
    config.adapter_heads);
}

inline Array standard_normal(std::size_t rows, std::size_t cols, Rng & rng)
{
  std::normal_distribution<double> dist(0.0, 1.0);
  Array a = Array::zeros(rows, cols);
  for (auto & v : a.data()) {
    v = dist(rng);
  }
  return a;
}

/// Everything the training step needs from one forward pass.
struct ForwardResult
{
  LossBreakdown losses;
  Posterior post;
  AdapterOutput adapted;
  HierarchicalLoss hier;
  Var reconstruction;
  std::vector<std::size_t> winners;
};

/// encode -> posterior -> reparameterize -> adapt -> contrast -> decode, plus
/// `k_train` prior-path samples for the winner-take-all term. All noise comes
/// from `noise_seed`.
inline ForwardResult forward_loss(
  Binding & p, const ModelConfig & config, const Batch & b, const LossWeights & weights,
  std::size_t k_train, std::uint64_t noise_seed, double kl_scale = 1.0)
{
  if (k_train == 0) {
    throw ConfigError("forward_loss: k_train must be >= 1");
  }
  Rng rng(noise_seed);
  const std::size_t rows = b.rows();
  ForwardResult out;
  Var h = encode(p, config, b);
  Var tokens_for_contrast;
  if (config.placement == AdapterPlacement::post_encoder) {
    out.adapted = adapt(p, config, h, b);
    h = out.adapted.z_adapted;
    tokens_for_contrast = h;
  }
  out.post = posterior(p, h);
  Condition cond = condition(p, h, b);

  Var z = reparameterize(out.post.mu, out.post.sigma, standard_normal(rows, config.d_z, rng));
  if (config.placement == AdapterPlacement::post_latent) {
    out.adapted = adapt(p, config, z, b);
    z = out.adapted.z_adapted;
    tokens_for_contrast = z;
    if (config.contrast_on_mean && config.contrastive != ContrastiveVariant::off) {
      tokens_for_contrast = adapt(p, config, out.post.mu, b).z_adapted;
    }
  }
  out.reconstruction = decode(p, z, cond);

  std::vector<Var> samples;
  for (std::size_t k = 0; k < k_train; ++k) {
    Var zk = p.tape().constant(standard_normal(rows, config.d_z, rng));
    if (config.placement == AdapterPlacement::post_latent) {
      zk = adapt(p, config, zk, b).z_adapted;
    }
    samples.push_back(decode(p, zk, cond));
  }
  WtaResult wta = wta_loss(samples, b.target, b.agents);
  out.winners = wta.winners;

  out.hier = hierarchical_loss(
    p, tokens_for_contrast, b.roles, b.domains, config.temperature, weights.lambda_c, config.contrastive);
  Var elbo = elbo_loss(out.reconstruction, b.target, b.missing, out.post.mu, out.post.sigma, weights.lambda1 * kl_scale);
  Var rec = rec_loss(out.reconstruction, b.target, b.visible);
  out.losses = total_loss(elbo, rec, wta.loss, out.hier.total, weights);
  return out;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

/// K prior-path completions of every scene in `b`; result[k] is rows x 2T.
/// Scene s, sample k draws its noise from derive_seed(scene_seeds[s], {k}).
inline std::vector<Array> sample_batch(
  const ParamStore & params, const ModelConfig & config, const Batch & b, std::size_t k,
  std::span<const std::uint64_t> scene_seeds)
{
  if (k == 0) {
    throw ConfigError("sample_K: K must be >= 1");
  }
  if (scene_seeds.size() != b.scenes) {
    throw DimensionError("sample_K: one seed per scene required");
  }
  Tape tape(false);
  Binding p(tape, params);
  Var h = encode(p, config, b);
  if (config.placement == AdapterPlacement::post_encoder) {
    h = adapt(p, config, h, b).z_adapted;
  }
  Condition cond = condition(p, h, b);
  std::vector<Array> out;
  out.reserve(k);
  for (std::size_t s = 0; s < k; ++s) {
    Array eps = Array::zeros(b.rows(), config.d_z);
    for (std::size_t sc = 0; sc < b.scenes; ++sc) {
      Rng rng(derive_seed(scene_seeds[sc], {s}));
      std::normal_distribution<double> dist(0.0, 1.0);
      for (std::size_t r = sc * b.agents; r < (sc + 1) * b.agents; ++r) {
        for (std::size_t c = 0; c < config.d_z; ++c) {
          eps(r, c) = dist(rng);
        }
      }
    }
    Var z = tape.constant(std::move(eps));
    if (config.placement == AdapterPlacement::post_latent) {
      z = adapt(p, config, z, b).z_adapted;
    }
    out.push_back(decode(p, z, cond).value());
  }
  return out;
}

/// K completions of one scene, each N*T*2 in the scene's xy layout.
inline std::vector<std::vector<double>> sample_k(
  const ParamStore & params, const ModelConfig & config, const SceneSequence & scene, std::size_t k,
  std::uint64_t seed)
{
  const Batch b = make_batch(scene, config);
  const std::uint64_t seeds[] = {seed};
  std::vector<std::vector<double>> out;
  for (auto & a : sample_batch(params, config, b, k, seeds)) {
    out.emplace_back(a.values().begin(), a.values().end());
  }
  return out;
}

/// Per-agent contrastive-space embeddings computed from the posterior mean.
/// A space without a dedicated head falls back to the normalized adapted latent.
struct Embeddings
{
  Array role;
  Array domain;
};

inline Embeddings embed(const ParamStore & params, const ModelConfig & config, const Batch & b)
{
  Tape tape(false);
  Binding p(tape, params);
  Var h = encode(p, config, b);
  Var tokens;
  if (config.placement == AdapterPlacement::post_encoder) {
    h = adapt(p, config, h, b).z_adapted;
    tokens = h;
  } else {
    tokens = adapt(p, config, posterior(p, h).mu, b).z_adapted;
  }
  Projection proj = project(p, tokens);
  Var fallback = l2_normalize_rows(tokens);
  return {
    (proj.role.valid() ? proj.role : fallback).value(),
    (proj.domain.valid() ? proj.domain : fallback).value()};
}

}  // namespace mtraj

#endif  // MTRAJ__MODEL_HPP_
