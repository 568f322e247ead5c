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

#ifndef MTRAJ__LOSSES_HPP_
#define MTRAJ__LOSSES_HPP_

// Training objective:
//
//   elbo  = SE(missing) / count_m + lambda1 * KL(N(mu, sigma^2) || N(0, I))
//   rec   = SE(visible) / count_v
//   wta   = mean over scenes of min_k SE(full trajectory of sample k) / count
//   total = elbo + lambda2 * rec + lambda3 * wta + lambda4 * hier
//
// SE sums (dx^2 + dy^2) over the selected (agent, step) entries; counts are in
// entries, not coordinates.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "mtraj/common.hpp"
#include "mtraj/numerics.hpp"

namespace mtraj
{

struct LossWeights
{
  double lambda1 = 0.1;  // KL
  double lambda2 = 1.0;  // visible reconstruction
  double lambda3 = 1.0;  // winner-take-all
  double lambda4 = 0.1;  // hierarchical contrastive
  double lambda_c = 1.0;  // domain term inside the contrastive loss

  void validate() const
  {
    const double all[] = {lambda1, lambda2, lambda3, lambda4, lambda_c};
    const char * names[] = {"lambda1", "lambda2", "lambda3", "lambda4", "lambda_c"};
    for (std::size_t i = 0; i < 5; ++i) {
      if (!(all[i] >= 0.0) || !std::isfinite(all[i])) {
        throw ConfigError(std::string("loss weight ") + names[i] + " must be finite and >= 0");
      }
    }
  }
};

/// Sum over rows of 0.5 * sum_dims(mu^2 + sigma^2 - 1 - ln sigma^2), divided
/// by the number of rows (agents across the batch).
inline Var kl_gaussian(Var mu, Var sigma)
{
  const Array & s = sigma.value();
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s[i] > 0.0)) {
      throw DomainError("kl_gaussian: sigma must be > 0");
    }
  }
  Var per = sub(add(square(mu), square(sigma)), scale(log(sigma), 2.0));
  Var total = scale(add_scalar(per, -1.0), 0.5);
  return scale(sum(total), 1.0 / static_cast<double>(mu.rows()));
}

/// Squared error summed over entries where `weight` is 1, divided by `count`.
/// `weight` is aligned with `pred` (both coordinates of an entry share a value).
inline Var masked_squared_error(Var pred, const Array & target, const Array & weight, double count)
{
  Var diff = add_const(pred, [&] {
    Array neg = target;
    for (auto & v : neg.data()) {
      v = -v;
    }
    return neg;
  }());
  return scale(sum(mul_const(square(diff), weight)), 1.0 / count);
}

namespace detail
{
inline double entry_count(const Array & weight)
{
  double n = 0.0;
  for (auto v : weight.data()) {
    n += v;
  }
  return n / 2.0;
}
}  // namespace detail

/// Missing-region squared error plus lambda1 * KL. `missing` is 1 on the
/// coordinates of missing entries.
inline Var elbo_loss(Var pred, const Array & target, const Array & missing, Var mu, Var sigma, double lambda1)
{
  const double count = detail::entry_count(missing);
  Var kl = kl_gaussian(mu, sigma);
  if (count == 0.0) {
    logging::warn("elbo_loss: no missing entries; reconstruction term is 0");
    return scale(kl, lambda1);
  }
  return add(masked_squared_error(pred, target, missing, count), scale(kl, lambda1));
}

/// Visible-region squared error. `visible` is 1 on the coordinates of observed entries.
inline Var rec_loss(Var pred, const Array & target, const Array & visible)
{
  const double count = detail::entry_count(visible);
  if (count == 0.0) {
    logging::warn("rec_loss: no visible entries; loss is 0");
    return pred.tape()->constant(Array::scalar(0.0));
  }
  return masked_squared_error(pred, target, visible, count);
}

struct WtaResult
{
  Var loss;
  /// Winning sample per scene (lowest index on ties).
  std::vector<std::size_t> winners;
};

/// `samples[k]` are full trajectories (rows x 2T) for all scenes; rows come in
/// contiguous groups of `group` agents per scene. Each scene contributes the
/// mean squared error of its best sample; only winners receive gradient.
inline WtaResult wta_loss(const std::vector<Var> & samples, const Array & target, std::size_t group)
{
  if (samples.empty()) {
    throw UsageError("wta_loss: K must be >= 1");
  }
  const std::size_t rows = target.rows(), width = target.cols();
  if (group == 0 || rows % group != 0) {
    throw DimensionError("wta_loss: rows not divisible into scenes");
  }
  const std::size_t scenes = rows / group;
  const double entries = static_cast<double>(group * width / 2);

  WtaResult out;
  out.winners.assign(scenes, 0);
  std::vector<double> best(scenes, std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const Array & y = samples[k].value();
    if (y.rows() != rows || y.cols() != width) {
      throw DimensionError("wta_loss: sample shape " + y.shape_string() + " vs target " + target.shape_string());
    }
    for (std::size_t s = 0; s < scenes; ++s) {
      double se = 0.0;
      for (std::size_t i = s * group * width; i < (s + 1) * group * width; ++i) {
        const double d = y[i] - target[i];
        se += d * d;
      }
      se /= entries;
      if (se < best[s]) {
        best[s] = se;
        out.winners[s] = k;
      }
    }
  }

  Tape & tape = *samples.front().tape();
  Var total = tape.constant(Array::scalar(0.0));
  for (std::size_t k = 0; k < samples.size(); ++k) {
    Array weight = Array::zeros(rows, width);
    bool any = false;
    for (std::size_t s = 0; s < scenes; ++s) {
      if (out.winners[s] != k) {
        continue;
      }
      any = true;
      for (std::size_t i = s * group * width; i < (s + 1) * group * width; ++i) {
        weight[i] = 1.0;
      }
    }
    if (any) {
      total = add(total, masked_squared_error(samples[k], target, weight, entries * static_cast<double>(scenes)));
    }
  }
  out.loss = total;
  return out;
}

struct LossBreakdown
{
  Var total_var;
  double elbo = 0.0;
  double rec = 0.0;
  double wta = 0.0;
  double hier = 0.0;
  double total = 0.0;
};

inline LossBreakdown total_loss(Var elbo, Var rec, Var wta, Var hier, const LossWeights & w)
{
  w.validate();
  LossBreakdown out;
  out.total_var = add(add(add(elbo, scale(rec, w.lambda2)), scale(wta, w.lambda3)), scale(hier, w.lambda4));
  out.elbo = elbo.item();
  out.rec = rec.item();
  out.wta = wta.item();
  out.hier = hier.item();
  out.total = out.total_var.item();
  return out;
}

}  // namespace mtraj

#endif  // MTRAJ__LOSSES_HPP_
