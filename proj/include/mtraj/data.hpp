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

#ifndef MTRAJ__DATA_HPP_
#define MTRAJ__DATA_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtraj/common.hpp"

namespace mtraj
{

enum class Role : std::uint8_t { ball = 0, player = 1 };
enum class Team : std::uint8_t { offense = 0, defense = 1, none = 2 };

inline constexpr std::size_t kRoleCount = 2;
inline constexpr std::size_t kTeamCount = 3;

inline std::string to_string(Role r) { return r == Role::ball ? "ball" : "player"; }

inline std::string to_string(Team t)
{
  switch (t) {
    case Team::offense:
      return "offense";
    case Team::defense:
      return "defense";
    default:
      return "none";
  }
}

inline Role parse_role(const std::string & s)
{
  if (s == "ball") {
    return Role::ball;
  }
  if (s == "player") {
    return Role::player;
  }
  throw ParseError("unknown role '" + s + "' (expected ball|player)");
}

inline Team parse_team(const std::string & s)
{
  if (s == "offense") {
    return Team::offense;
  }
  if (s == "defense") {
    return Team::defense;
  }
  if (s == "none") {
    return Team::none;
  }
  throw ParseError("unknown team '" + s + "' (expected offense|defense|none)");
}

struct FieldBounds
{
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;

  bool valid() const
  {
    return std::isfinite(x_min) && std::isfinite(x_max) && std::isfinite(y_min) &&
           std::isfinite(y_max) && x_min < x_max && y_min < y_max;
  }

  void validate() const
  {
    if (!valid()) {
      throw ValidationError(
        "degenerate field bounds x[" + format_double(x_min) + "," + format_double(x_max) +
        "] y[" + format_double(y_min) + "," + format_double(y_max) + "]");
    }
  }

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }

  /// Boundary-inclusive.
  bool contains(double x, double y) const
  {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }

  static FieldBounds unit() { return {}; }

  friend bool operator==(const FieldBounds &, const FieldBounds &) = default;
};

/// One multi-agent sample: positions, observation mask, per-agent labels and
/// the domain label. Positions are agent-major: xy[(i * steps + t) * 2 + d].
struct SceneSequence
{
  std::size_t agents = 0;
  std::size_t steps = 0;
  std::vector<double> xy;
  std::vector<std::uint8_t> mask;
  std::vector<Role> roles;
  std::vector<Team> teams;
  std::string domain;
  std::string units;
  FieldBounds bounds;
  /// Raw-unit frame the coordinates came from; equals `bounds` until normalized.
  FieldBounds source_bounds;
  std::string source_units;

  double x(std::size_t i, std::size_t t) const { return xy[(i * steps + t) * 2]; }
  double y(std::size_t i, std::size_t t) const { return xy[(i * steps + t) * 2 + 1]; }
  double & x(std::size_t i, std::size_t t) { return xy[(i * steps + t) * 2]; }
  double & y(std::size_t i, std::size_t t) { return xy[(i * steps + t) * 2 + 1]; }
  bool observed(std::size_t i, std::size_t t) const { return mask[i * steps + t] != 0; }

  std::span<const double> track(std::size_t i) const
  {
    return std::span<const double>(xy).subspan(i * steps * 2, steps * 2);
  }

  std::size_t ball_index() const
  {
    for (std::size_t i = 0; i < agents; ++i) {
      if (roles[i] == Role::ball) {
        return i;
      }
    }
    return agents;
  }

  void validate() const
  {
    if (agents == 0 || steps == 0) {
      throw ValidationError("sequence has no agents or steps");
    }
    if (xy.size() != agents * steps * 2 || mask.size() != agents * steps ||
      roles.size() != agents || teams.size() != agents)
    {
      throw ValidationError("sequence arrays inconsistent with N and T");
    }
    std::size_t balls = 0;
    for (auto r : roles) {
      balls += r == Role::ball ? 1 : 0;
    }
    if (balls != 1) {
      throw ValidationError("sequence must contain exactly one ball, found " + std::to_string(balls));
    }
    for (std::size_t i = 0; i < agents; ++i) {
      bool any = false;
      for (std::size_t t = 0; t < steps; ++t) {
        const auto m = mask[i * steps + t];
        if (m > 1) {
          throw ValidationError("mask values must be 0 or 1");
        }
        any = any || m == 1;
      }
      if (!any) {
        throw ValidationError("agent " + std::to_string(i) + " has no observed step");
      }
    }
    for (double v : xy) {
      if (!std::isfinite(v)) {
        throw ValidationError("non-finite coordinate");
      }
    }
    bounds.validate();
  }
};

struct Dataset
{
  std::vector<SceneSequence> sequences;
  FieldBounds bounds;
  std::string units;
  bool normalized = false;

  std::size_t size() const { return sequences.size(); }
  bool empty() const { return sequences.empty(); }

  std::map<std::string, std::size_t> domain_histogram() const
  {
    std::map<std::string, std::size_t> h;
    for (const auto & s : sequences) {
      ++h[s.domain];
    }
    return h;
  }

  std::vector<std::string> domains() const
  {
    std::vector<std::string> out;
    for (const auto & [d, n] : domain_histogram()) {
      out.push_back(d);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

/// Motion profile for one synthetic domain. Players follow a mean-reverting
/// AR(1)-velocity walk around formation homes; the ball moves on straight
/// segments toward re-sampled waypoints.
struct DomainProfile
{
  std::string name;
  std::string domain;
  std::string units;
  FieldBounds bounds;
  double player_step = 0.0;  // target mean per-step displacement of players
  double ball_step = 0.0;    // target mean per-step displacement of the ball
  double inertia = 0.8;      // velocity persistence
  double reversion = 0.02;   // pull toward home per step
  // Formation homes (domain units).
  double offense_x_min = 0.0, offense_x_max = 1.0;
  double defense_x_min = 0.0, defense_x_max = 1.0;
  double home_y_min = 0.0, home_y_max = 1.0;
  double home_jitter = 0.0;      // initial offset from home, in player steps
  double pass_probability = 0.5;  // waypoint is a player's position rather than a free point
  double retarget_probability = 0.1;
};

inline DomainProfile basketball_profile()
{
  DomainProfile p;
  p.name = "basketball-like";
  p.domain = "basketball";
  p.units = "feet";
  p.bounds = {0.0, 94.0, 0.0, 50.0};
  p.player_step = 0.45;
  p.ball_step = 2.4;
  p.offense_x_min = 52.0;
  p.offense_x_max = 88.0;
  p.defense_x_min = 58.0;
  p.defense_x_max = 90.0;
  p.home_y_min = 6.0;
  p.home_y_max = 44.0;
  p.home_jitter = 4.0;
  return p;
}

inline DomainProfile football_profile()
{
  DomainProfile p;
  p.name = "football-like";
  p.domain = "football";
  p.units = "yards";
  p.bounds = {0.0, 120.0, 0.0, 53.3};
  p.player_step = 0.22;
  p.ball_step = 1.1;
  p.inertia = 0.85;
  p.offense_x_min = 48.0;
  p.offense_x_max = 56.0;
  p.defense_x_min = 60.0;
  p.defense_x_max = 68.0;
  p.home_y_min = 8.0;
  p.home_y_max = 45.0;
  p.home_jitter = 4.0;
  p.pass_probability = 0.7;
  return p;
}

inline DomainProfile soccer_profile()
{
  DomainProfile p;
  p.name = "soccer-like";
  p.domain = "soccer";
  p.units = "pixels";
  p.bounds = {0.0, 1050.0, 0.0, 680.0};
  p.player_step = 3.2;
  p.ball_step = 18.0;
  p.inertia = 0.75;
  p.offense_x_min = 150.0;
  p.offense_x_max = 700.0;
  p.defense_x_min = 350.0;
  p.defense_x_max = 900.0;
  p.home_y_min = 60.0;
  p.home_y_max = 620.0;
  p.home_jitter = 4.0;
  p.pass_probability = 0.4;
  return p;
}

/// Accepts `basketball`, `basketball-like`, etc.
inline DomainProfile profile_by_name(const std::string & name)
{
  if (name == "basketball" || name == "basketball-like") {
    return basketball_profile();
  }
  if (name == "football" || name == "football-like") {
    return football_profile();
  }
  if (name == "soccer" || name == "soccer-like") {
    return soccer_profile();
  }
  throw ConfigError("unknown profile '" + name + "' (expected basketball|football|soccer)");
}

namespace detail
{

inline SceneSequence generate_one(const DomainProfile & p, std::size_t agents, std::size_t steps, Rng & rng)
{
  SceneSequence s;
  s.agents = agents;
  s.steps = steps;
  s.xy.assign(agents * steps * 2, 0.0);
  s.mask.assign(agents * steps, 1);
  s.domain = p.domain;
  s.units = p.units;
  s.source_units = p.units;
  s.bounds = p.bounds;
  s.source_bounds = p.bounds;
  s.roles.assign(agents, Role::player);
  s.teams.assign(agents, Team::offense);
  s.roles[0] = Role::ball;
  s.teams[0] = Team::none;
  for (std::size_t i = 1; i < agents; ++i) {
    s.teams[i] = (i % 2 == 1) ? Team::offense : Team::defense;
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const FieldBounds & b = p.bounds;
  auto clamp_x = [&](double v) { return std::clamp(v, b.x_min, b.x_max); };
  auto clamp_y = [&](double v) { return std::clamp(v, b.y_min, b.y_max); };

  // Per-coordinate innovation so the stationary mean speed is ~player_step
  // (Rayleigh mean = sigma * sqrt(pi / 2)).
  const double speed_sigma = p.player_step / std::sqrt(M_PI / 2.0);
  const double innovation = speed_sigma * std::sqrt(1.0 - p.inertia * p.inertia);

  // Players.
  for (std::size_t i = 1; i < agents; ++i) {
    const bool off = s.teams[i] == Team::offense;
    const double hx =
      (off ? p.offense_x_min : p.defense_x_min) +
      unit(rng) * ((off ? p.offense_x_max : p.defense_x_max) - (off ? p.offense_x_min : p.defense_x_min));
    const double hy = p.home_y_min + unit(rng) * (p.home_y_max - p.home_y_min);
    double px = clamp_x(hx + gauss(rng) * p.home_jitter * p.player_step);
    double py = clamp_y(hy + gauss(rng) * p.home_jitter * p.player_step);
    double vx = gauss(rng) * speed_sigma;
    double vy = gauss(rng) * speed_sigma;
    for (std::size_t t = 0; t < steps; ++t) {
      if (t > 0) {
        vx = p.inertia * vx + p.reversion * (hx - px) + innovation * gauss(rng);
        vy = p.inertia * vy + p.reversion * (hy - py) + innovation * gauss(rng);
        const double nx = clamp_x(px + vx);
        const double ny = clamp_y(py + vy);
        if (nx != px + vx) {
          vx = 0.0;
        }
        if (ny != py + vy) {
          vy = 0.0;
        }
        px = nx;
        py = ny;
      }
      s.x(i, t) = px;
      s.y(i, t) = py;
    }
  }

  // Ball: starts with a random player (or mid-field when there is none).
  double bx = 0.5 * (b.x_min + b.x_max);
  double by = 0.5 * (b.y_min + b.y_max);
  if (agents > 1) {
    const std::size_t holder = 1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(agents - 1)) % (agents - 1);
    bx = s.x(holder, 0);
    by = s.y(holder, 0);
  }
  double tx = bx, ty = by, speed = 0.0;
  auto retarget = [&](std::size_t t) {
    if (agents > 1 && unit(rng) < p.pass_probability) {
      const std::size_t j = 1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(agents - 1)) % (agents - 1);
      tx = s.x(j, std::min(t + 4, steps - 1));
      ty = s.y(j, std::min(t + 4, steps - 1));
    } else {
      const double cx = 0.5 * (p.offense_x_min + p.defense_x_max);
      const double spread_x = std::max(p.defense_x_max - p.offense_x_min, 0.2 * b.width());
      tx = clamp_x(cx + (unit(rng) - 0.5) * spread_x);
      ty = b.y_min + unit(rng) * b.height();
    }
    speed = p.ball_step * (0.6 + 0.8 * unit(rng));
  };
  retarget(0);
  for (std::size_t t = 0; t < steps; ++t) {
    if (t > 0) {
      if (unit(rng) < p.retarget_probability) {
        retarget(t);
      }
      const double dx = tx - bx, dy = ty - by;
      const double dist = std::hypot(dx, dy);
      if (dist <= speed) {
        bx = tx;
        by = ty;
        retarget(t);
      } else if (dist > 0.0) {
        bx = clamp_x(bx + dx / dist * speed);
        by = clamp_y(by + dy / dist * speed);
      }
    }
    s.x(0, t) = bx;
    s.y(0, t) = by;
  }
  return s;
}

}  // namespace detail

/// Deterministic in (profile, seed); sequence k draws from its own stream.
inline Dataset generate_synthetic(
  const DomainProfile & profile, std::size_t n_sequences, std::size_t agents, std::size_t steps,
  std::uint64_t seed)
{
  if (agents < 2) {
    throw ConfigError("generate_synthetic: need at least 2 agents (ball + 1 player)");
  }
  if (steps < 4) {
    throw ConfigError("generate_synthetic: need at least 4 steps");
  }
  profile.bounds.validate();
  if (profile.ball_step <= profile.player_step && profile.ball_step > 0.0) {
    logging::warn("profile '" + profile.name + "': ball_step <= player_step");
  }
  Dataset ds;
  ds.bounds = profile.bounds;
  ds.units = profile.units;
  ds.sequences.reserve(n_sequences);
  for (std::size_t k = 0; k < n_sequences; ++k) {
    Rng rng(derive_seed(seed, {fnv1a(profile.domain), k}));
    ds.sequences.push_back(detail::generate_one(profile, agents, steps, rng));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

inline void normalize_xy(std::span<double> xy, const FieldBounds & b)
{
  for (std::size_t k = 0; k + 1 < xy.size(); k += 2) {
    xy[k] = (xy[k] - b.x_min) / b.width();
    xy[k + 1] = (xy[k + 1] - b.y_min) / b.height();
  }
}

inline void denormalize_xy(std::span<double> xy, const FieldBounds & b)
{
  for (std::size_t k = 0; k + 1 < xy.size(); k += 2) {
    xy[k] = xy[k] * b.width() + b.x_min;
    xy[k + 1] = xy[k + 1] * b.height() + b.y_min;
  }
}

inline SceneSequence normalize(const SceneSequence & s)
{
  s.bounds.validate();
  SceneSequence out = s;
  normalize_xy(out.xy, s.bounds);
  out.bounds = FieldBounds::unit();
  out.units = "normalized";
  return out;
}

/// Maps every sequence into the unit square; original frames are kept in
/// `source_bounds` so `denormalize` can invert.
inline Dataset normalize(const Dataset & ds)
{
  Dataset out;
  out.bounds = FieldBounds::unit();
  out.units = "normalized";
  out.normalized = true;
  out.sequences.reserve(ds.size());
  for (const auto & s : ds.sequences) {
    out.sequences.push_back(normalize(s));
  }
  return out;
}

inline SceneSequence denormalize(const SceneSequence & s)
{
  SceneSequence out = s;
  denormalize_xy(out.xy, s.source_bounds);
  out.bounds = s.source_bounds;
  out.units = s.source_units;
  return out;
}

inline Dataset denormalize(const Dataset & ds)
{
  Dataset out;
  out.sequences.reserve(ds.size());
  for (const auto & s : ds.sequences) {
    out.sequences.push_back(denormalize(s));
  }
  if (!out.sequences.empty()) {
    out.bounds = out.sequences.front().bounds;
    out.units = out.sequences.front().units;
  } else {
    out.bounds = ds.bounds;
    out.units = ds.units;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Masks
// ---------------------------------------------------------------------------

enum class MaskPattern { prediction, random, block, mixed };

inline std::string to_string(MaskPattern p)
{
  switch (p) {
    case MaskPattern::prediction:
      return "prediction";
    case MaskPattern::random:
      return "random";
    case MaskPattern::block:
      return "block";
    default:
      return "mixed";
  }
}

inline MaskPattern parse_mask_pattern(const std::string & s)
{
  if (s == "prediction") {
    return MaskPattern::prediction;
  }
  if (s == "random") {
    return MaskPattern::random;
  }
  if (s == "block") {
    return MaskPattern::block;
  }
  if (s == "mixed") {
    return MaskPattern::mixed;
  }
  throw ConfigError("unknown mask pattern '" + s + "'");
}

/// Observation pattern. `prefix_ratio` additionally drops observed steps of a
/// prediction mask at random (imputation inside the observed window).
/// `mixed` picks prediction / random / block uniformly per call.
struct MaskSpec
{
  MaskPattern pattern = MaskPattern::random;
  double missing_ratio = 0.3;
  std::size_t horizon = 0;
  double prefix_ratio = 0.0;
  std::uint64_t seed = 0;
};

/// N x T mask, row-major per agent; 1 = observed.
inline std::vector<std::uint8_t> make_mask(const MaskSpec & spec, std::size_t agents, std::size_t steps)
{
  if (steps == 0 || agents == 0) {
    throw ConfigError("make_mask: empty shape");
  }
  Rng rng(derive_seed(spec.seed, {0x6d61736bULL}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::uint8_t> m(agents * steps, 1);

  MaskPattern pattern = spec.pattern;
  if (pattern == MaskPattern::mixed) {
    pattern = static_cast<MaskPattern>(static_cast<int>(unit(rng) * 3.0) % 3);
  }
  const bool needs_ratio = pattern == MaskPattern::random || pattern == MaskPattern::block;
  if (needs_ratio && !(spec.missing_ratio > 0.0 && spec.missing_ratio < 1.0)) {
    throw ConfigError("make_mask: missing_ratio must lie in (0,1)");
  }
  if (spec.prefix_ratio < 0.0 || spec.prefix_ratio >= 1.0) {
    throw ConfigError("make_mask: prefix_ratio must lie in [0,1)");
  }

  auto random_drop = [&](std::size_t i, std::size_t limit, double ratio) {
    for (std::size_t t = 0; t < limit; ++t) {
      if (unit(rng) < ratio) {
        m[i * steps + t] = 0;
      }
    }
    bool any = false;
    for (std::size_t t = 0; t < limit; ++t) {
      any = any || m[i * steps + t] == 1;
    }
    if (!any) {
      const auto keep = static_cast<std::size_t>(unit(rng) * static_cast<double>(limit)) % limit;
      m[i * steps + keep] = 1;
    }
  };

  switch (pattern) {
    case MaskPattern::prediction: {
      std::size_t horizon = spec.pattern == MaskPattern::mixed && spec.horizon == 0 ? steps / 2 : spec.horizon;
      if (horizon >= steps) {
        throw ConfigError(
          "make_mask: horizon " + std::to_string(horizon) + " must be < T=" + std::to_string(steps));
      }
      const std::size_t prefix = steps - horizon;
      for (std::size_t i = 0; i < agents; ++i) {
        for (std::size_t t = prefix; t < steps; ++t) {
          m[i * steps + t] = 0;
        }
        if (spec.prefix_ratio > 0.0) {
          random_drop(i, prefix, spec.prefix_ratio);
        }
      }
      break;
    }
    case MaskPattern::random:
      for (std::size_t i = 0; i < agents; ++i) {
        random_drop(i, steps, spec.missing_ratio);
      }
      break;
    case MaskPattern::block: {
      const auto len = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(spec.missing_ratio * static_cast<double>(steps))), 1,
        steps - 1);
      for (std::size_t i = 0; i < agents; ++i) {
        const std::size_t start =
          static_cast<std::size_t>(unit(rng) * static_cast<double>(steps - len + 1)) % (steps - len + 1);
        for (std::size_t t = start; t < start + len; ++t) {
          m[i * steps + t] = 0;
        }
      }
      break;
    }
    case MaskPattern::mixed:
      break;
  }
  return m;
}

/// X_v = X * M and X_m = X * (1 - M), with M broadcast over both coordinates.
inline std::pair<std::vector<double>, std::vector<double>> split_visible_missing(
  std::span<const double> xy, std::span<const std::uint8_t> mask)
{
  if (xy.size() != mask.size() * 2) {
    throw DimensionError("split_visible_missing: xy and mask sizes disagree");
  }
  std::vector<double> visible(xy.size(), 0.0), missing(xy.size(), 0.0);
  for (std::size_t k = 0; k < mask.size(); ++k) {
    auto & dst = mask[k] ? visible : missing;
    dst[2 * k] = xy[2 * k];
    dst[2 * k + 1] = xy[2 * k + 1];
  }
  return {std::move(visible), std::move(missing)};
}

// ---------------------------------------------------------------------------
// Merging and I/O
// ---------------------------------------------------------------------------

/// Concatenates normalized datasets, keeping each sequence's domain label.
inline Dataset merge_unified(const std::vector<Dataset> & parts)
{
  Dataset out;
  out.bounds = FieldBounds::unit();
  out.units = "normalized";
  out.normalized = true;
  std::size_t total = 0;
  for (const auto & p : parts) {
    if (!p.normalized) {
      throw ValidationError("merge_unified: input in raw units '" + p.units + "'; normalize first");
    }
    total += p.size();
  }
  out.sequences.reserve(total);
  for (const auto & p : parts) {
    out.sequences.insert(out.sequences.end(), p.sequences.begin(), p.sequences.end());
  }
  return out;
}

namespace detail
{

inline nlohmann::json bounds_to_json(const FieldBounds & b)
{
  return {{"x_min", b.x_min}, {"x_max", b.x_max}, {"y_min", b.y_min}, {"y_max", b.y_max}};
}

inline FieldBounds bounds_from_json(const nlohmann::json & j)
{
  FieldBounds b;
  b.x_min = j.at("x_min").get<double>();
  b.x_max = j.at("x_max").get<double>();
  b.y_min = j.at("y_min").get<double>();
  b.y_max = j.at("y_max").get<double>();
  return b;
}

inline SceneSequence sequence_from_json(const nlohmann::json & j)
{
  SceneSequence s;
  s.domain = j.at("domain").get<std::string>();
  s.units = j.at("units").get<std::string>();
  s.bounds = bounds_from_json(j.at("bounds"));
  s.source_bounds = j.contains("source_bounds") ? bounds_from_json(j.at("source_bounds")) : s.bounds;
  s.source_units = j.contains("source_units") ? j.at("source_units").get<std::string>() : s.units;
  const auto & agents = j.at("agents");
  if (!agents.is_array() || agents.empty()) {
    throw ParseError("'agents' must be a non-empty array");
  }
  s.agents = agents.size();
  s.steps = agents.front().at("xy").size();
  bool mask_defaulted = false;
  for (std::size_t i = 0; i < s.agents; ++i) {
    const auto & a = agents[i];
    s.roles.push_back(parse_role(a.at("role").get<std::string>()));
    s.teams.push_back(parse_team(a.at("team").get<std::string>()));
    const auto & xy = a.at("xy");
    if (xy.size() != s.steps) {
      throw ValidationError(
        "agent " + std::to_string(i) + " has " + std::to_string(xy.size()) + " steps, expected " +
        std::to_string(s.steps));
    }
    for (const auto & p : xy) {
      if (!p.is_array() || p.size() != 2) {
        throw ParseError("xy entries must be [x, y] pairs");
      }
      s.xy.push_back(p[0].get<double>());
      s.xy.push_back(p[1].get<double>());
    }
    if (a.contains("mask")) {
      const auto & m = a.at("mask");
      if (m.size() != s.steps) {
        throw ValidationError(
          "agent " + std::to_string(i) + " mask has " + std::to_string(m.size()) +
          " entries, expected " + std::to_string(s.steps));
      }
      for (const auto & v : m) {
        const int mv = v.get<int>();
        if (mv != 0 && mv != 1) {
          throw ParseError("mask values must be 0 or 1");
        }
        s.mask.push_back(static_cast<std::uint8_t>(mv));
      }
    } else {
      mask_defaulted = true;
      s.mask.insert(s.mask.end(), s.steps, 1);
    }
  }
  if (mask_defaulted) {
    logging::warn("record without 'mask': defaulting to all-observed");
  }
  s.validate();
  return s;
}

inline nlohmann::json sequence_to_json(const SceneSequence & s)
{
  nlohmann::json agents = nlohmann::json::array();
  for (std::size_t i = 0; i < s.agents; ++i) {
    nlohmann::json xy = nlohmann::json::array();
    nlohmann::json mask = nlohmann::json::array();
    for (std::size_t t = 0; t < s.steps; ++t) {
      xy.push_back({s.x(i, t), s.y(i, t)});
      mask.push_back(static_cast<int>(s.mask[i * s.steps + t]));
    }
    agents.push_back(
      {{"role", to_string(s.roles[i])}, {"team", to_string(s.teams[i])}, {"xy", std::move(xy)},
       {"mask", std::move(mask)}});
  }
  nlohmann::json j = {
    {"domain", s.domain}, {"agents", std::move(agents)}, {"bounds", bounds_to_json(s.bounds)},
    {"units", s.units}};
  if (!(s.source_bounds == s.bounds) || s.source_units != s.units) {
    j["source_bounds"] = bounds_to_json(s.source_bounds);
    j["source_units"] = s.source_units;
  }
  return j;
}

}  // namespace detail

/// One JSON object per line; blank lines are skipped.
inline Dataset read_jsonl(std::istream & in)
{
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      ds.sequences.push_back(detail::sequence_from_json(nlohmann::json::parse(line)));
    } catch (const ValidationError & e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception & e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!ds.sequences.empty()) {
    ds.bounds = ds.sequences.front().bounds;
    ds.units = ds.sequences.front().units;
    ds.normalized = ds.units == "normalized";
  }
  return ds;
}

inline Dataset load_jsonl(const std::string & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open dataset file: " + path);
  }
  return read_jsonl(in);
}

inline void write_jsonl(const Dataset & ds, std::ostream & out)
{
  for (const auto & s : ds.sequences) {
    out << detail::sequence_to_json(s).dump() << '\n';
  }
}

inline void save_jsonl(const Dataset & ds, const std::string & path)
{
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write dataset file: " + path);
  }
  write_jsonl(ds, out);
  if (!out) {
    throw std::runtime_error("write failed: " + path);
  }
}

}  // namespace mtraj

#endif  // MTRAJ__DATA_HPP_
