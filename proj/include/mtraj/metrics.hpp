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

#ifndef MTRAJ__METRICS_HPP_
#define MTRAJ__METRICS_HPP_

// Evaluation metrics over completed trajectories and ground-truth motion
// statistics. A track is T x 2 interleaved (x0, y0, x1, y1, ...); a scene is
// N tracks back to back.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtraj/common.hpp"
#include "mtraj/data.hpp"

namespace mtraj
{

/// No missing entries to score.
class EvaluationRegionError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

namespace detail
{
inline std::size_t track_steps(std::span<const double> track, const char * op)
{
  if (track.size() % 2 != 0) {
    throw DimensionError(std::string(op) + ": track must hold (x, y) pairs");
  }
  const std::size_t t = track.size() / 2;
  if (t < 2) {
    throw DimensionError(std::string(op) + ": need at least 2 steps, got " + std::to_string(t));
  }
  return t;
}
}  // namespace detail

/// Mean per-step displacement.
inline double step_stat(std::span<const double> track)
{
  const std::size_t steps = detail::track_steps(track, "step_stat");
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < steps; ++t) {
    total += std::hypot(track[2 * t + 2] - track[2 * t], track[2 * t + 3] - track[2 * t + 1]);
  }
  return total / static_cast<double>(steps - 1);
}

/// Total travelled length.
inline double path_l(std::span<const double> track)
{
  const std::size_t steps = detail::track_steps(track, "path_l");
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < steps; ++t) {
    total += std::hypot(track[2 * t + 2] - track[2 * t], track[2 * t + 3] - track[2 * t + 1]);
  }
  return total;
}

/// Straight-line distance between first and last position.
inline double endpoint_displacement(std::span<const double> track)
{
  const std::size_t steps = detail::track_steps(track, "endpoint_displacement");
  return std::hypot(track[2 * steps - 2] - track[0], track[2 * steps - 1] - track[1]);
}

/// Both readings of Path-D for one scene.
struct PathD
{
  /// max_i path_l(i) - min_i path_l(i) over the selected agents (0 for one agent).
  double discrepancy = 0.0;
  /// Mean start-to-end displacement over the selected agents.
  double endpoint = 0.0;
};

/// `agent_filter` restricts the agents considered (empty = all).
inline PathD path_d(
  std::span<const double> scene, std::size_t agents, std::span<const std::size_t> agent_filter = {})
{
  if (agents == 0 || scene.size() % (agents * 2) != 0) {
    throw DimensionError("path_d: scene size inconsistent with agent count");
  }
  const std::size_t width = scene.size() / agents;
  std::vector<std::size_t> ids(agent_filter.begin(), agent_filter.end());
  if (ids.empty()) {
    for (std::size_t i = 0; i < agents; ++i) {
      ids.push_back(i);
    }
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double endpoint = 0.0;
  for (auto i : ids) {
    const auto track = scene.subspan(i * width, width);
    const double l = path_l(track);
    lo = std::min(lo, l);
    hi = std::max(hi, l);
    endpoint += endpoint_displacement(track);
  }
  return {hi - lo, endpoint / static_cast<double>(ids.size())};
}

/// Fraction of points outside `bounds` (boundary-inclusive).
inline double oob(std::span<const double> points, const FieldBounds & bounds)
{
  bounds.validate();
  const std::size_t n = points.size() / 2;
  if (n == 0) {
    return 0.0;
  }
  std::size_t out = 0;
  for (std::size_t k = 0; k < n; ++k) {
    out += bounds.contains(points[2 * k], points[2 * k + 1]) ? 0 : 1;
  }
  return static_cast<double>(out) / static_cast<double>(n);
}

struct AdeResult
{
  double value = 0.0;
  std::size_t best = 0;
};

/// Mean Euclidean error over the scored entries of each sample, minimized over
/// samples. Scored entries are the missing ones (mask == 0) unless
/// `full_sequence`.
inline AdeResult min_ade_k(
  const std::vector<std::vector<double>> & samples, std::span<const double> truth,
  std::span<const std::uint8_t> mask, bool full_sequence = false)
{
  if (samples.empty()) {
    throw DimensionError("min_ade_k: K must be >= 1");
  }
  if (truth.size() != mask.size() * 2) {
    throw DimensionError("min_ade_k: truth and mask sizes disagree");
  }
  std::vector<std::size_t> entries;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (full_sequence || mask[k] == 0) {
      entries.push_back(k);
    }
  }
  if (entries.empty()) {
    throw EvaluationRegionError("min_ade_k: no missing entries to evaluate");
  }
  AdeResult r{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto & y = samples[s];
    if (y.size() != truth.size()) {
      throw DimensionError("min_ade_k: sample size differs from truth");
    }
    double total = 0.0;
    for (auto k : entries) {
      total += std::hypot(y[2 * k] - truth[2 * k], y[2 * k + 1] - truth[2 * k + 1]);
    }
    const double ade = total / static_cast<double>(entries.size());
    if (ade < r.value) {
      r = {ade, s};
    }
  }
  return r;
}

/// min_ade_k restricted to the listed agents of an N x T scene.
inline AdeResult min_ade_k_agents(
  const std::vector<std::vector<double>> & samples, std::span<const double> truth,
  std::span<const std::uint8_t> mask, std::size_t steps, std::span<const std::size_t> agents,
  bool full_sequence = false)
{
  std::vector<double> sub_truth;
  std::vector<std::uint8_t> sub_mask;
  for (auto i : agents) {
    sub_truth.insert(sub_truth.end(), truth.begin() + i * steps * 2, truth.begin() + (i + 1) * steps * 2);
    sub_mask.insert(sub_mask.end(), mask.begin() + i * steps, mask.begin() + (i + 1) * steps);
  }
  std::vector<std::vector<double>> sub_samples;
  sub_samples.reserve(samples.size());
  for (const auto & s : samples) {
    std::vector<double> sub;
    for (auto i : agents) {
      sub.insert(sub.end(), s.begin() + i * steps * 2, s.begin() + (i + 1) * steps * 2);
    }
    sub_samples.push_back(std::move(sub));
  }
  return min_ade_k(sub_samples, sub_truth, sub_mask, full_sequence);
}

// ---------------------------------------------------------------------------
// Aggregated reports
// ---------------------------------------------------------------------------

inline const std::vector<std::string> & metric_names()
{
  static const std::vector<std::string> names = {
    "min_ade", "oob", "step", "path_l", "path_d_discrepancy", "path_d_endpoint"};
  return names;
}

/// Running means of each metric, each with its own count.
struct MetricAccumulator
{
  std::map<std::string, std::pair<double, std::size_t>> sums;

  void add(const std::string & metric, double v)
  {
    auto & [s, n] = sums[metric];
    s += v;
    ++n;
  }

  bool has(const std::string & metric) const { return sums.count(metric) != 0; }

  double mean(const std::string & metric) const
  {
    auto it = sums.find(metric);
    if (it == sums.end() || it->second.second == 0) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    return it->second.first / static_cast<double>(it->second.second);
  }
};

/// Metric means grouped by (domain, role); role is "ball", "player" or "all".
struct MetricsReport
{
  std::string protocol;
  std::map<std::pair<std::string, std::string>, MetricAccumulator> groups;

  double value(const std::string & domain, const std::string & role, const std::string & metric) const
  {
    auto it = groups.find({domain, role});
    return it == groups.end() ? std::numeric_limits<double>::quiet_NaN() : it->second.mean(metric);
  }

  /// Columns: dataset, protocol, role, metric, value.
  void write_csv(std::ostream & out, bool header = true) const
  {
    if (header) {
      out << "dataset,protocol,role,metric,value\n";
    }
    for (const auto & [key, acc] : groups) {
      for (const auto & m : metric_names()) {
        if (acc.has(m)) {
          out << key.first << ',' << protocol << ',' << key.second << ',' << m << ','
              << format_double(acc.mean(m)) << '\n';
        }
      }
    }
  }
};

namespace detail
{
inline std::vector<std::size_t> agents_with_role(const SceneSequence & s, Role r)
{
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < s.agents; ++i) {
    if (s.roles[i] == r) {
      ids.push_back(i);
    }
  }
  return ids;
}

/// Step/Path statistics of `scene` (layout of `ref`) into role groups.
inline void add_motion_stats(
  MetricsReport & report, const SceneSequence & ref, std::span<const double> scene)
{
  const std::size_t width = ref.steps * 2;
  for (const char * role_name : {"ball", "player", "all"}) {
    std::vector<std::size_t> ids;
    if (std::string(role_name) == "all") {
      for (std::size_t i = 0; i < ref.agents; ++i) {
        ids.push_back(i);
      }
    } else {
      ids = agents_with_role(ref, std::string(role_name) == "ball" ? Role::ball : Role::player);
    }
    if (ids.empty()) {
      continue;
    }
    auto & acc = report.groups[{ref.domain, role_name}];
    for (auto i : ids) {
      const auto track = scene.subspan(i * width, width);
      acc.add("step", step_stat(track));
      acc.add("path_l", path_l(track));
      acc.add("path_d_endpoint", endpoint_displacement(track));
    }
    acc.add("path_d_discrepancy", path_d(scene, ref.agents, ids).discrepancy);
  }
}
}  // namespace detail

/// Per-(domain, role) means of Step, Path-L and both Path-D readings.
inline MetricsReport gt_stats(const Dataset & ds)
{
  if (ds.empty()) {
    throw ValidationError("gt_stats: empty dataset");
  }
  MetricsReport report;
  report.protocol = "ground_truth";
  for (const auto & s : ds.sequences) {
    detail::add_motion_stats(report, s, s.xy);
  }
  return report;
}

/// Table-style CSV: dataset, role, step, path_l, path_d_discrepancy, path_d_endpoint.
inline void write_gt_stats_csv(const MetricsReport & report, std::ostream & out)
{
  out << "dataset,role,step,path_l,path_d_discrepancy,path_d_endpoint\n";
  for (const auto & [key, acc] : report.groups) {
    out << key.first << ',' << key.second << ',' << format_double(acc.mean("step")) << ','
        << format_double(acc.mean("path_l")) << ',' << format_double(acc.mean("path_d_discrepancy"))
        << ',' << format_double(acc.mean("path_d_endpoint")) << '\n';
  }
}

}  // namespace mtraj

#endif  // MTRAJ__METRICS_HPP_
