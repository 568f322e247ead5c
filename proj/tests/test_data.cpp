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

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "support.hpp"

namespace
{

using namespace mtraj;
using mtraj::testing::make_scene;

// Mean per-step displacement of every agent with role `r`, computed directly.
double mean_step(const Dataset & ds, Role r)
{
  double total = 0.0;
  std::size_t n = 0;
  for (const auto & s : ds.sequences) {
    for (std::size_t i = 0; i < s.agents; ++i) {
      if (s.roles[i] != r) {
        continue;
      }
      for (std::size_t t = 0; t + 1 < s.steps; ++t) {
        total += std::hypot(s.x(i, t + 1) - s.x(i, t), s.y(i, t + 1) - s.y(i, t));
        ++n;
      }
    }
  }
  return total / static_cast<double>(n);
}

TEST(Generator, SequencesSatisfyInvariants)
{
  for (const auto & p : {basketball_profile(), football_profile(), soccer_profile()}) {
    const Dataset ds = generate_synthetic(p, 20, 5, 24, 3);
    ASSERT_EQ(ds.size(), 20u);
    for (const auto & s : ds.sequences) {
      EXPECT_NO_THROW(s.validate());
      EXPECT_EQ(s.ball_index(), 0u);
      for (std::size_t k = 0; k < s.xy.size(); k += 2) {
        EXPECT_TRUE(p.bounds.contains(s.xy[k], s.xy[k + 1]));
      }
    }
  }
}

TEST(Generator, IsDeterministicInSeed)
{
  const Dataset a = generate_synthetic(soccer_profile(), 10, 5, 24, 42);
  const Dataset b = generate_synthetic(soccer_profile(), 10, 5, 24, 42);
  const Dataset c = generate_synthetic(soccer_profile(), 10, 5, 24, 43);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a.sequences[k].xy, b.sequences[k].xy);
  }
  EXPECT_NE(a.sequences[0].xy, c.sequences[0].xy);
}

TEST(Generator, BasketballBallToPlayerStepRatio)
{
  const Dataset ds = generate_synthetic(basketball_profile(), 200, 5, 24, 0);
  const double ratio = mean_step(ds, Role::ball) / mean_step(ds, Role::player);
  EXPECT_GE(ratio, 3.0);
  EXPECT_LE(ratio, 8.0);
}

TEST(Generator, BallOutpacesPlayersInEveryDomain)
{
  for (const auto & p : {basketball_profile(), football_profile(), soccer_profile()}) {
    const Dataset ds = generate_synthetic(p, 100, 5, 24, 1);
    EXPECT_GT(mean_step(ds, Role::ball), mean_step(ds, Role::player)) << p.domain;
  }
}

TEST(Generator, NormalizedBallSpeedOrdering)
{
  auto speed = [](const DomainProfile & p) {
    return mean_step(normalize(generate_synthetic(p, 200, 5, 24, 0)), Role::ball);
  };
  const double bb = speed(basketball_profile()), fb = speed(football_profile()), sc = speed(soccer_profile());
  EXPECT_GT(bb, sc);
  EXPECT_GT(sc, fb);
}

TEST(Generator, StaticProfileHasZeroStep)
{
  DomainProfile p = basketball_profile();
  p.player_step = 0.0;
  p.ball_step = 0.0;
  p.home_jitter = 0.0;
  p.reversion = 0.0;
  const Dataset ds = generate_synthetic(p, 10, 4, 12, 5);
  const MetricsReport r = gt_stats(ds);
  for (const char * role : {"ball", "player"}) {
    EXPECT_EQ(r.value("basketball", role, "step"), 0.0) << role;
    EXPECT_EQ(r.value("basketball", role, "path_l"), 0.0) << role;
  }
}

TEST(Generator, RejectsTooFewAgentsOrSteps)
{
  EXPECT_THROW(generate_synthetic(basketball_profile(), 1, 1, 24, 0), ConfigError);
  EXPECT_THROW(generate_synthetic(basketball_profile(), 1, 3, 3, 0), ConfigError);
}

TEST(Generator, WarnsWhenBallIsNotFaster)
{
  DomainProfile p = football_profile();
  p.ball_step = p.player_step * 0.5;
  logging::WarningCapture cap;
  generate_synthetic(p, 1, 3, 8, 0);
  EXPECT_TRUE(cap.contains("ball_step"));
}

TEST(Normalize, CornerAndMidfield)
{
  FieldBounds court{0.0, 94.0, 0.0, 50.0};
  SceneSequence s = make_scene({{{0.0, 0.0}, {47.0, 25.0}}, {{94.0, 50.0}, {47.0, 25.0}}}, "basketball", court);
  const SceneSequence n = normalize(s);
  EXPECT_EQ(n.x(0, 0), 0.0);
  EXPECT_EQ(n.y(0, 0), 0.0);
  EXPECT_EQ(n.x(0, 1), 0.5);
  EXPECT_EQ(n.y(0, 1), 0.5);
  EXPECT_EQ(n.x(1, 0), 1.0);
  EXPECT_EQ(n.units, "normalized");
  EXPECT_TRUE(n.bounds == FieldBounds::unit());
}

TEST(Normalize, RoundTripProperty)
{
  for (const auto & p : {basketball_profile(), football_profile(), soccer_profile()}) {
    const Dataset raw = generate_synthetic(p, 30, 5, 16, 9);
    const Dataset back = denormalize(normalize(raw));
    for (std::size_t k = 0; k < raw.size(); ++k) {
      for (std::size_t c = 0; c < raw.sequences[k].xy.size(); ++c) {
        EXPECT_NEAR(back.sequences[k].xy[c], raw.sequences[k].xy[c], 1e-12);
      }
      EXPECT_TRUE(back.sequences[k].bounds == p.bounds);
    }
  }
}

TEST(Normalize, DegenerateBoundsRejected)
{
  SceneSequence s = make_scene({{{0.0, 0.0}, {1.0, 1.0}}, {{0.0, 0.0}, {1.0, 1.0}}});
  s.bounds = {1.0, 1.0, 0.0, 1.0};
  EXPECT_THROW(normalize(s), ValidationError);
}

TEST(Mask, PredictionWithZeroHorizonIsAllOnes)
{
  MaskSpec spec;
  spec.pattern = MaskPattern::prediction;
  spec.horizon = 0;
  const auto m = make_mask(spec, 3, 10);
  EXPECT_EQ(m, std::vector<std::uint8_t>(30, 1));
}

TEST(Mask, PredictionSuffix)
{
  MaskSpec spec;
  spec.pattern = MaskPattern::prediction;
  spec.horizon = 4;
  const auto m = make_mask(spec, 2, 10);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t t = 0; t < 10; ++t) {
      EXPECT_EQ(m[i * 10 + t], t < 6 ? 1 : 0) << i << "," << t;
    }
  }
}

TEST(Mask, HorizonMustBeShorterThanSequence)
{
  MaskSpec spec;
  spec.pattern = MaskPattern::prediction;
  spec.horizon = 10;
  EXPECT_THROW(make_mask(spec, 2, 10), ConfigError);
}

TEST(Mask, RandomRatioConverges)
{
  MaskSpec spec;
  spec.pattern = MaskPattern::random;
  spec.missing_ratio = 0.3;
  spec.seed = 17;
  const auto m = make_mask(spec, 10, 100);
  double missing = 0.0;
  for (auto v : m) {
    missing += v == 0 ? 1.0 : 0.0;
  }
  EXPECT_NEAR(missing / 1000.0, 0.3, 0.05);
}

TEST(Mask, EveryAgentKeepsAnObservation)
{
  for (auto pattern : {MaskPattern::random, MaskPattern::block, MaskPattern::mixed, MaskPattern::prediction}) {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
      MaskSpec spec;
      spec.pattern = pattern;
      spec.missing_ratio = 0.95;
      spec.horizon = 5;
      spec.prefix_ratio = 0.9;
      spec.seed = seed;
      const auto m = make_mask(spec, 4, 6);
      for (std::size_t i = 0; i < 4; ++i) {
        bool any = false;
        for (std::size_t t = 0; t < 6; ++t) {
          any = any || m[i * 6 + t] == 1;
        }
        ASSERT_TRUE(any) << to_string(pattern) << " seed " << seed;
      }
    }
  }
}

TEST(Mask, BlockIsOneContiguousRun)
{
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    MaskSpec spec;
    spec.pattern = MaskPattern::block;
    spec.missing_ratio = 0.3;
    spec.seed = seed;
    const auto m = make_mask(spec, 3, 20);
    for (std::size_t i = 0; i < 3; ++i) {
      std::size_t runs = 0, zeros = 0;
      for (std::size_t t = 0; t < 20; ++t) {
        zeros += m[i * 20 + t] == 0;
        if (m[i * 20 + t] == 0 && (t == 0 || m[i * 20 + t - 1] == 1)) {
          ++runs;
        }
      }
      EXPECT_EQ(runs, 1u);
      EXPECT_EQ(zeros, 6u);
    }
  }
}

TEST(Mask, SameSpecSameMask)
{
  MaskSpec spec;
  spec.pattern = MaskPattern::mixed;
  spec.seed = 99;
  EXPECT_EQ(make_mask(spec, 5, 24), make_mask(spec, 5, 24));
}

TEST(Split, Definition)
{
  const std::vector<double> xy = {1, 2, 3, 4};
  const std::vector<std::uint8_t> m = {1, 0};
  const auto [v, miss] = split_visible_missing(xy, m);
  EXPECT_EQ(v, (std::vector<double>{1, 2, 0, 0}));
  EXPECT_EQ(miss, (std::vector<double>{0, 0, 3, 4}));
}

TEST(Split, AllObserved)
{
  const std::vector<double> xy = {1, 2, 3, 4, 5, 6};
  const auto [v, miss] = split_visible_missing(xy, std::vector<std::uint8_t>(3, 1));
  EXPECT_EQ(v, xy);
  EXPECT_EQ(miss, std::vector<double>(6, 0.0));
}

TEST(Split, PartsSumToWholeExactly)
{
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 100.0);
    std::bernoulli_distribution b(0.5);
    std::vector<double> xy(2 * 37);
    std::vector<std::uint8_t> m(37);
    for (auto & v : xy) {
      v = g(rng);
    }
    for (auto & v : m) {
      v = b(rng) ? 1 : 0;
    }
    const auto [vis, miss] = split_visible_missing(xy, m);
    for (std::size_t k = 0; k < xy.size(); ++k) {
      ASSERT_EQ(vis[k] + miss[k], xy[k]);
    }
  }
}

TEST(Merge, CardinalityOfLargeUnifiedSet)
{
  // Stand-in sets with the sizes of a real three-sport merge.
  const SceneSequence proto = normalize(make_scene({{{0.1, 0.1}, {0.2, 0.2}}, {{0.3, 0.3}, {0.4, 0.4}}}));
  std::vector<Dataset> parts;
  const std::vector<std::pair<std::string, std::size_t>> sizes = {
    {"basketball", 93490}, {"football", 10762}, {"soccer", 9882}};
  for (const auto & [domain, n] : sizes) {
    Dataset d;
    d.normalized = true;
    d.units = "normalized";
    SceneSequence s = proto;
    s.domain = domain;
    d.sequences.assign(n, s);
    parts.push_back(std::move(d));
  }
  const Dataset merged = merge_unified(parts);
  EXPECT_EQ(merged.size(), 114134u);
  const auto h = merged.domain_histogram();
  EXPECT_EQ(h.at("basketball"), 93490u);
  EXPECT_EQ(h.at("football"), 10762u);
  EXPECT_EQ(h.at("soccer"), 9882u);
}

TEST(Merge, SingleDatasetIsIdentity)
{
  const Dataset a = normalize(generate_synthetic(basketball_profile(), 5, 3, 8, 0));
  const Dataset m = merge_unified({a});
  ASSERT_EQ(m.size(), a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(m.sequences[k].xy, a.sequences[k].xy);
  }
}

TEST(Merge, HistogramIsSumOfInputs)
{
  const Dataset a = normalize(generate_synthetic(basketball_profile(), 7, 3, 8, 0));
  const Dataset b = normalize(generate_synthetic(soccer_profile(), 4, 3, 8, 0));
  const Dataset c = normalize(generate_synthetic(basketball_profile(), 2, 3, 8, 1));
  const auto h = merge_unified({a, b, c}).domain_histogram();
  EXPECT_EQ(h.at("basketball"), 9u);
  EXPECT_EQ(h.at("soccer"), 4u);
}

TEST(Merge, RefusesRawUnits)
{
  const Dataset raw = generate_synthetic(basketball_profile(), 2, 3, 8, 0);
  EXPECT_THROW(merge_unified({raw}), ValidationError);
}

TEST(Jsonl, EmptyInputIsEmptyDataset)
{
  std::istringstream in("");
  EXPECT_TRUE(read_jsonl(in).empty());
}

TEST(Jsonl, RoundTrip)
{
  const Dataset ds = generate_synthetic(football_profile(), 6, 4, 10, 2);
  std::stringstream buf;
  write_jsonl(ds, buf);
  const Dataset back = read_jsonl(buf);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t k = 0; k < ds.size(); ++k) {
    for (std::size_t c = 0; c < ds.sequences[k].xy.size(); ++c) {
      EXPECT_NEAR(back.sequences[k].xy[c], ds.sequences[k].xy[c], 1e-12);
    }
    EXPECT_EQ(back.sequences[k].mask, ds.sequences[k].mask);
    EXPECT_EQ(back.sequences[k].roles, ds.sequences[k].roles);
    EXPECT_EQ(back.sequences[k].teams, ds.sequences[k].teams);
    EXPECT_EQ(back.sequences[k].domain, "football");
  }
  EXPECT_EQ(back.units, "yards");
}

TEST(Jsonl, NormalizedRoundTripKeepsSourceFrame)
{
  const Dataset ds = normalize(generate_synthetic(soccer_profile(), 3, 3, 8, 2));
  std::stringstream buf;
  write_jsonl(ds, buf);
  const Dataset back = read_jsonl(buf);
  EXPECT_TRUE(back.normalized);
  EXPECT_TRUE(back.sequences[0].source_bounds == soccer_profile().bounds);
}

const char * kRecordNoMask =
  R"({"domain":"basketball","units":"feet","bounds":{"x_min":0,"x_max":94,"y_min":0,"y_max":50},)"
  R"("agents":[{"role":"ball","team":"none","xy":[[1,2],[3,4]]},)"
  R"({"role":"player","team":"offense","xy":[[5,6],[7,8]]}]})";

TEST(Jsonl, MissingMaskDefaultsToObservedWithWarning)
{
  logging::WarningCapture cap;
  std::istringstream in(std::string(kRecordNoMask) + "\n");
  const Dataset ds = read_jsonl(in);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.sequences[0].mask, std::vector<std::uint8_t>(4, 1));
  EXPECT_TRUE(cap.contains("mask"));
}

TEST(Jsonl, SchemaErrorCarriesLineNumber)
{
  std::istringstream in(std::string(kRecordNoMask) + "\n{\"domain\": 3}\n");
  logging::WarningCapture cap;
  try {
    read_jsonl(in);
    FAIL() << "no exception";
  } catch (const ParseError & e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Jsonl, InconsistentStepsIsValidationError)
{
  std::string rec = kRecordNoMask;
  rec.replace(rec.find("[[5,6],[7,8]]"), 13, "[[5,6]]");
  std::istringstream in(rec);
  logging::WarningCapture cap;
  EXPECT_THROW(read_jsonl(in), ValidationError);
}

TEST(Jsonl, TwoBallsRejected)
{
  std::string rec = kRecordNoMask;
  rec.replace(rec.find("\"player\""), 8, "\"ball\"");
  std::istringstream in(rec);
  logging::WarningCapture cap;
  EXPECT_THROW(read_jsonl(in), ValidationError);
}

}  // namespace
