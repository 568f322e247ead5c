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

#ifndef MTRAJ__ADAPTER_HPP_
#define MTRAJ__ADAPTER_HPP_

// Role/domain-conditioned adapter.
//
// Each agent token gets a query built from the sum of its role and domain
// embeddings. The query attends (multi-head, scaled dot product) over the
// latent tokens of the agent's own scene, producing z_cond. A gate then blends
// z_cond with the original latent:
//
//   token_wise    alpha = sigmoid(GateNet([z, z_cond])), z' = alpha*z_cond + (1-alpha)*z
//   feature_wise  alpha = GateNet([z, z_cond]) (no squashing), same blend
//   no_gating     z' = z_cond
//   bypass        z' = z (adapter disabled)
//
// GateNet is Linear(2d -> d) -> tanh -> Linear(d -> d).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtraj/common.hpp"
#include "mtraj/numerics.hpp"
#include "mtraj/params.hpp"

namespace mtraj
{

enum class AdapterVariant { token_wise, feature_wise, no_gating, bypass };

inline std::string to_string(AdapterVariant v)
{
  switch (v) {
    case AdapterVariant::token_wise:
      return "token_wise";
    case AdapterVariant::feature_wise:
      return "feature_wise";
    case AdapterVariant::no_gating:
      return "no_gating";
    default:
      return "bypass";
  }
}

inline AdapterVariant parse_adapter_variant(const std::string & s)
{
  if (s == "token_wise") {
    return AdapterVariant::token_wise;
  }
  if (s == "feature_wise") {
    return AdapterVariant::feature_wise;
  }
  if (s == "no_gating") {
    return AdapterVariant::no_gating;
  }
  if (s == "bypass") {
    return AdapterVariant::bypass;
  }
  throw ConfigError("unknown adapter variant '" + s + "'");
}

/// Label id outside the embedding table.
class VocabularyError : public std::out_of_range
{
public:
  using std::out_of_range::out_of_range;
};

struct AdapterDims
{
  std::size_t token_dim = 16;  // d_z (or d_model when inserted after the encoder); also d_e
  std::size_t heads = 4;
  std::size_t roles = 2;
  std::size_t domains = 3;
};

inline void add_adapter_params(
  ParamStore & store, const AdapterDims & dims, AdapterVariant variant, std::uint64_t seed,
  const std::string & prefix = "adapter")
{
  if (variant == AdapterVariant::bypass) {
    return;
  }
  const std::size_t d = dims.token_dim;
  if (dims.heads == 0 || d % dims.heads != 0) {
    throw ConfigError(
      "adapter: token_dim " + std::to_string(d) + " not divisible by heads " +
      std::to_string(dims.heads));
  }
  store.add(prefix + ".embed.role", init::normal(dims.roles, d, 0.02, seed, prefix + ".embed.role"));
  store.add(prefix + ".embed.domain", init::normal(dims.domains, d, 0.02, seed, prefix + ".embed.domain"));
  for (const char * proj : {"q", "k", "v", "o"}) {
    init::add_linear(store, prefix + ".attn." + proj, d, d, seed);
  }
  if (variant == AdapterVariant::token_wise || variant == AdapterVariant::feature_wise) {
    init::add_linear(store, prefix + ".gate.hidden", 2 * d, d, seed);
    init::add_zero_linear(store, prefix + ".gate.out", d, d);
  }
}

/// e_role[r] + e_domain[d] per row.
inline Var embed_labels(
  Binding & p, std::span<const std::size_t> roles, std::span<const std::size_t> domains,
  const std::string & prefix = "adapter")
{
  if (roles.size() != domains.size()) {
    throw DimensionError("embed_labels: role and domain label counts differ");
  }
  const std::size_t n_roles = p.store().at(prefix + ".embed.role").rows();
  const std::size_t n_domains = p.store().at(prefix + ".embed.domain").rows();
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] >= n_roles) {
      throw VocabularyError("embed_labels: role id " + std::to_string(roles[i]) + " out of vocabulary");
    }
    if (domains[i] >= n_domains) {
      throw VocabularyError(
        "embed_labels: domain id " + std::to_string(domains[i]) + " out of vocabulary");
    }
  }
  Var er = gather_rows(p(prefix + ".embed.role"), {roles.begin(), roles.end()});
  Var ed = gather_rows(p(prefix + ".embed.domain"), {domains.begin(), domains.end()});
  return add(er, ed);
}

struct CrossAttention
{
  Var output;
  /// Per head, rows x group attention weights.
  std::vector<Var> weights;
};

/// Each query row attends over the token rows of its own group (scene).
inline CrossAttention cross_attend(
  Binding & p, Var query, Var tokens, std::size_t group, std::size_t heads,
  const std::string & prefix = "adapter")
{
  if (query.rows() != tokens.rows()) {
    throw DimensionError("cross_attend: one query per token row expected");
  }
  Var q = linear(p, prefix + ".attn.q", query);
  Var k = linear(p, prefix + ".attn.k", tokens);
  Var v = linear(p, prefix + ".attn.v", tokens);
  const std::size_t d = q.cols();
  const std::size_t dh = d / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  CrossAttention out;
  std::vector<Var> mixed;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = heads == 1 ? k : slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = heads == 1 ? v : slice_cols(v, h * dh, (h + 1) * dh);
    Var w = softmax_rows(scale(grouped_scores(qh, kh, group), scale_factor));
    out.weights.push_back(w);
    mixed.push_back(grouped_mix(w, vh, group));
  }
  Var concat = heads == 1 ? mixed.front() : concat_cols(mixed);
  out.output = linear(p, prefix + ".attn.o", concat);
  return out;
}

struct GateOutput
{
  Var z_adapted;
  /// Invalid for no_gating and bypass.
  Var alpha;
};

inline GateOutput gate(
  Binding & p, Var z, Var z_cond, AdapterVariant variant, const std::string & prefix = "adapter")
{
  switch (variant) {
    case AdapterVariant::bypass:
      return {z, Var()};
    case AdapterVariant::no_gating:
      return {z_cond, Var()};
    default:
      break;
  }
  Var hidden = tanh(linear(p, prefix + ".gate.hidden", concat_cols({z, z_cond})));
  Var logits = linear(p, prefix + ".gate.out", hidden);
  Var alpha = variant == AdapterVariant::token_wise ? sigmoid(logits) : logits;
  Var blended = add(mul(alpha, z_cond), mul(one_minus(alpha), z));
  return {blended, alpha};
}

struct AdapterOutput
{
  Var z_cond;
  Var alpha;
  Var z_adapted;
  std::vector<Var> attention;
};

/// z: rows x d tokens, rows = scenes * group; one role and domain id per row.
inline AdapterOutput adapter_forward(
  Binding & p, Var z, std::span<const std::size_t> roles, std::span<const std::size_t> domains,
  std::size_t group, AdapterVariant variant, std::size_t heads, const std::string & prefix = "adapter")
{
  if (roles.size() != z.rows()) {
    throw DimensionError(
      "adapter_forward: " + std::to_string(roles.size()) + " labels for " +
      std::to_string(z.rows()) + " tokens");
  }
  AdapterOutput out;
  if (variant == AdapterVariant::bypass) {
    out.z_adapted = z;
    return out;
  }
  Var query = embed_labels(p, roles, domains, prefix);
  CrossAttention ca = cross_attend(p, query, z, group, heads, prefix);
  GateOutput g = gate(p, z, ca.output, variant, prefix);
  out.z_cond = ca.output;
  out.alpha = g.alpha;
  out.z_adapted = g.z_adapted;
  out.attention = std::move(ca.weights);
  return out;
}

}  // namespace mtraj

#endif  // MTRAJ__ADAPTER_HPP_
