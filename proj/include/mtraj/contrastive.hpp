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

#ifndef MTRAJ__CONTRASTIVE_HPP_
#define MTRAJ__CONTRASTIVE_HPP_

// Role and domain contrastive objectives over per-agent latents.
//
// Two heads project the adapted latent into a role space and a domain space;
// each output row is L2-normalized. Within a space the loss is supervised
// InfoNCE with multiple positives:
//
//   l(i, j) = -log( exp(s_ij / tau) / sum_{k != i} exp(s_ik / tau) )
//
// averaged over every ordered same-label pair (i, j), with s the cosine
// similarity.

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtraj/common.hpp"
#include "mtraj/numerics.hpp"
#include "mtraj/params.hpp"

namespace mtraj
{

enum class ContrastiveVariant { hierarchical, role_only, domain_only, shared_feature, off };

inline std::string to_string(ContrastiveVariant v)
{
  switch (v) {
    case ContrastiveVariant::hierarchical:
      return "hierarchical";
    case ContrastiveVariant::role_only:
      return "role_only";
    case ContrastiveVariant::domain_only:
      return "domain_only";
    case ContrastiveVariant::shared_feature:
      return "shared_feature";
    default:
      return "off";
  }
}

inline ContrastiveVariant parse_contrastive_variant(const std::string & s)
{
  if (s == "hierarchical") {
    return ContrastiveVariant::hierarchical;
  }
  if (s == "role_only") {
    return ContrastiveVariant::role_only;
  }
  if (s == "domain_only") {
    return ContrastiveVariant::domain_only;
  }
  if (s == "shared_feature") {
    return ContrastiveVariant::shared_feature;
  }
  if (s == "off") {
    return ContrastiveVariant::off;
  }
  throw ConfigError("unknown contrastive variant '" + s + "'");
}

inline bool uses_role_term(ContrastiveVariant v)
{
  return v == ContrastiveVariant::hierarchical || v == ContrastiveVariant::role_only ||
         v == ContrastiveVariant::shared_feature;
}

inline bool uses_domain_term(ContrastiveVariant v)
{
  return v == ContrastiveVariant::hierarchical || v == ContrastiveVariant::domain_only ||
         v == ContrastiveVariant::shared_feature;
}

struct ProjectionDims
{
  std::size_t input_dim = 16;
  std::size_t output_dim = 16;
  /// 0 = single linear map; otherwise Linear -> tanh -> Linear with this width.
  std::size_t hidden = 0;
};

/// Adds `<prefix>.role` and/or `<prefix>.domain` heads for the terms the
/// variant trains. shared_feature and off need no heads. `with_domain = false`
/// drops the domain head (single-domain training).
inline void add_projection_params(
  ParamStore & store, const ProjectionDims & dims, ContrastiveVariant variant, std::uint64_t seed,
  bool with_domain = true, const std::string & prefix = "proj")
{
  auto add_head = [&](const std::string & head) {
    if (dims.hidden == 0) {
      init::add_linear(store, head + ".out", dims.input_dim, dims.output_dim, seed);
    } else {
      init::add_linear(store, head + ".hidden", dims.input_dim, dims.hidden, seed);
      init::add_linear(store, head + ".out", dims.hidden, dims.output_dim, seed);
    }
  };
  if (variant == ContrastiveVariant::hierarchical || variant == ContrastiveVariant::role_only) {
    add_head(prefix + ".role");
  }
  if (with_domain &&
    (variant == ContrastiveVariant::hierarchical || variant == ContrastiveVariant::domain_only))
  {
    add_head(prefix + ".domain");
  }
}

/// One head's normalized output.
inline Var project_head(Binding & p, const std::string & head, Var z)
{
  Var y = p.store().contains(head + ".hidden.w") ? tanh(linear(p, head + ".hidden", z)) : z;
  return l2_normalize_rows(linear(p, head + ".out", y));
}

struct Projection
{
  Var role;
  Var domain;
};

/// Both heads; a head that does not exist in the store yields an invalid Var.
inline Projection project(Binding & p, Var z, const std::string & prefix = "proj")
{
  Projection out;
  if (p.store().contains(prefix + ".role.out.w")) {
    out.role = project_head(p, prefix + ".role", z);
  }
  if (p.store().contains(prefix + ".domain.out.w")) {
    out.domain = project_head(p, prefix + ".domain", z);
  }
  return out;
}

/// All ordered pairs (i, j), i != j, with equal labels.
inline std::vector<std::pair<std::size_t, std::size_t>> select_pairs(std::span<const std::size_t> labels)
{
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (i != j && labels[i] == labels[j]) {
        pairs.emplace_back(i, j);
      }
    }
  }
  return pairs;
}

namespace detail
{
// Finite stand-in for -inf on the diagonal; exp underflows to exactly 0.
inline constexpr double kMaskedLogit = -1e9;

/// Row-wise log-probabilities over k != i of the temperature-scaled cosine
/// similarities. `embeddings` must already be normalized.
inline Var contrastive_log_probs(Var embeddings, double temperature)
{
  const std::size_t b = embeddings.rows();
  Var sim = scale(matmul(embeddings, transpose(embeddings)), 1.0 / temperature);
  Array diag = Array::zeros(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    diag(i, i) = kMaskedLogit;
  }
  return log_softmax_rows(add_const(sim, diag));
}
}  // namespace detail

/// Mean InfoNCE over all same-label ordered pairs. `embeddings` are expected
/// to be L2-normalized rows. Returns a constant 0 (with a warning) when no
/// anchor has a positive.
inline Var info_nce(Var embeddings, std::span<const std::size_t> labels, double temperature)
{
  if (!(temperature > 0.0)) {
    throw ConfigError("info_nce: temperature must be > 0");
  }
  const std::size_t b = embeddings.rows();
  if (labels.size() != b) {
    throw DimensionError(
      "info_nce: " + std::to_string(labels.size()) + " labels for " + std::to_string(b) + " rows");
  }
  const auto pairs = select_pairs(labels);
  if (pairs.empty()) {
    logging::warn("info_nce: no anchor with a positive in batch; loss set to 0");
    return embeddings.tape()->constant(Array::scalar(0.0));
  }
  Var logp = detail::contrastive_log_probs(embeddings, temperature);
  Array weight = Array::zeros(b, b);
  const double w = -1.0 / static_cast<double>(pairs.size());
  for (const auto & [i, j] : pairs) {
    weight(i, j) = w;
  }
  return sum(mul_const(logp, weight));
}

/// l(i, j) for every same-label pair, in select_pairs order.
inline std::vector<double> info_nce_pair_losses(
  const Array & embeddings, std::span<const std::size_t> labels, double temperature)
{
  if (!(temperature > 0.0)) {
    throw ConfigError("info_nce: temperature must be > 0");
  }
  Tape tape(false);
  Var logp = detail::contrastive_log_probs(tape.constant(embeddings), temperature);
  std::vector<double> out;
  for (const auto & [i, j] : select_pairs(labels)) {
    out.push_back(-logp.value()(i, j));
  }
  return out;
}

/// Whether a contrastive term has anything to contrast: at least two distinct
/// labels, one of which occurs twice.
inline bool has_contrast(std::span<const std::size_t> labels)
{
  std::set<std::size_t> distinct(labels.begin(), labels.end());
  return distinct.size() >= 2 && !select_pairs(labels).empty();
}

struct HierarchicalLoss
{
  Var total;
  Var role;
  Var domain;
  bool role_active = false;
  bool domain_active = false;
};

/// Variant-dependent combination of the role and domain terms. A term whose
/// labels are all equal within the batch (e.g. a single-domain batch) is
/// skipped rather than contributing a negative-free InfoNCE.
inline HierarchicalLoss hierarchical_loss(
  Binding & p, Var z_adapted, std::span<const std::size_t> roles, std::span<const std::size_t> domains,
  double temperature, double lambda_c, ContrastiveVariant variant, const std::string & prefix = "proj")
{
  if (!(temperature > 0.0)) {
    throw ConfigError("hierarchical_loss: temperature must be > 0");
  }
  if (lambda_c < 0.0) {
    throw ConfigError("hierarchical_loss: lambda_c must be >= 0");
  }
  Tape & tape = *z_adapted.tape();
  HierarchicalLoss out;
  out.total = tape.constant(Array::scalar(0.0));
  if (variant == ContrastiveVariant::off) {
    return out;
  }

  Var role_space, domain_space;
  if (variant == ContrastiveVariant::shared_feature) {
    role_space = domain_space = l2_normalize_rows(z_adapted);
  } else {
    Projection proj = project(p, z_adapted, prefix);
    role_space = proj.role;
    domain_space = proj.domain;
  }

  std::vector<Var> terms;
  if (uses_role_term(variant) && role_space.valid() && has_contrast(roles)) {
    out.role = info_nce(role_space, roles, temperature);
    out.role_active = true;
    terms.push_back(out.role);
  }
  if (uses_domain_term(variant) && domain_space.valid() && has_contrast(domains)) {
    out.domain = info_nce(domain_space, domains, temperature);
    out.domain_active = true;
    terms.push_back(scale(out.domain, lambda_c));
  }
  for (const auto & t : terms) {
    out.total = add(out.total, t);
  }
  return out;
}

}  // namespace mtraj

#endif  // MTRAJ__CONTRASTIVE_HPP_
