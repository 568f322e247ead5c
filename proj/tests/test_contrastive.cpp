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
#include <vector>

#include <gtest/gtest.h>

#include "gradient_cases.hpp"
#include "support.hpp"

namespace
{

using namespace mtraj;
using mtraj::testing::hierarchical_gradients;
using mtraj::testing::random_array;

Array normalized(Array a)
{
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double n = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      n += a(i, c) * a(i, c);
    }
    n = std::sqrt(n);
    for (std::size_t c = 0; c < a.cols(); ++c) {
      a(i, c) /= n;
    }
  }
  return a;
}

double nce(const Array & e, const std::vector<std::size_t> & labels, double tau)
{
  Tape tape;
  return info_nce(tape.constant(e), labels, tau).item();
}

// Direct evaluation of the multi-positive loss with plain loops.
double nce_oracle(const Array & e, const std::vector<std::size_t> & labels, double tau)
{
  const std::size_t b = e.rows();
  auto sim = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < e.cols(); ++c) {
      s += e(i, c) * e(j, c);
    }
    return s / tau;
  };
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < b; ++i) {
    double denom = 0.0;
    for (std::size_t k = 0; k < b; ++k) {
      if (k != i) {
        denom += std::exp(sim(i, k));
      }
    }
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i && labels[i] == labels[j]) {
        total += -(sim(i, j) - std::log(denom));
        ++pairs;
      }
    }
  }
  return total / static_cast<double>(pairs);
}

TEST(InfoNce, TwoSameLabelRowsGiveZero)
{
  const Array e = normalized(random_array(2, 3, 1));
  EXPECT_EQ(nce(e, {4, 4}, 0.1), 0.0);
}

TEST(InfoNce, IdenticalRowsGiveLogOfOthers)
{
  const Array e = Array::matrix(5, 2, {1, 0, 1, 0, 1, 0, 1, 0, 1, 0});
  EXPECT_NEAR(nce(e, {0, 0, 0, 0, 0}, 0.7), std::log(4.0), 1e-9);
}

TEST(InfoNce, OrthogonalNegatives)
{
  const Array e = Array::matrix(4, 3, {1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1});
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  EXPECT_NEAR(nce(e, {0, 0, 1, 2}, 1.0), expected, 1e-9);
}

TEST(InfoNce, MatchesLoopOracleOnRandomBatches)
{
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t b = 3 + seed % 10;
    std::vector<std::size_t> labels(b);
    for (auto & l : labels) {
      l = rng() % 3;
    }
    labels[0] = labels[1];
    const Array e = normalized(random_array(b, 5, seed + 7));
    const double tau = 0.05 + 0.1 * static_cast<double>(seed % 5);
    EXPECT_NEAR(nce(e, labels, tau), nce_oracle(e, labels, tau), 1e-10 * std::max(1.0, nce_oracle(e, labels, tau)));
  }
}

TEST(InfoNce, NonPositiveTemperatureRejected)
{
  const Array e = normalized(random_array(3, 2, 2));
  EXPECT_THROW(nce(e, {0, 0, 1}, 0.0), ConfigError);
  EXPECT_THROW(nce(e, {0, 0, 1}, -1.0), ConfigError);
  EXPECT_THROW(info_nce_pair_losses(e, std::vector<std::size_t>{0, 0, 1}, 0.0), ConfigError);
}

TEST(InfoNce, NoPositivesGiveZeroWithWarning)
{
  logging::WarningCapture capture;
  EXPECT_EQ(nce(normalized(random_array(3, 2, 3)), {0, 1, 2}, 0.1), 0.0);
  EXPECT_TRUE(capture.contains("no anchor with a positive"));
}

TEST(InfoNce, PairLossesAreNonNegative)
{
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Array e = normalized(random_array(8, 4, seed));
    for (double l : info_nce_pair_losses(e, std::vector<std::size_t>{0, 0, 0, 1, 1, 2, 2, 2}, 0.2)) {
      EXPECT_GE(l, 0.0);
    }
  }
}

TEST(InfoNce, PairLossFallsAsPositiveMovesCloser)
{
  // Anchor (1, 0); positive at angle theta; fixed negatives.
  double prev = std::numeric_limits<double>::infinity();
  for (double theta = 3.0; theta >= 0.0; theta -= 0.25) {
    const Array e = Array::matrix(4, 2, {1, 0, std::cos(theta), std::sin(theta), 0, 1, -1, 0});
    const double l = info_nce_pair_losses(e, std::vector<std::size_t>{0, 0, 1, 2}, 0.5).front();
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(Pairs, SelectionExamples)
{
  using P = std::pair<std::size_t, std::size_t>;
  EXPECT_EQ(select_pairs(std::vector<std::size_t>{0, 1, 0}), (std::vector<P>{{0, 2}, {2, 0}}));
  EXPECT_TRUE(select_pairs(std::vector<std::size_t>{0, 1, 2}).empty());
  EXPECT_TRUE(select_pairs(std::vector<std::size_t>{}).empty());
}

TEST(Pairs, CountIsSumOfOrderedPairsPerClass)
{
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    std::vector<std::size_t> labels(1 + seed % 20);
    std::vector<std::size_t> counts(4, 0);
    for (auto & l : labels) {
      l = rng() % 4;
      ++counts[l];
    }
    std::size_t expected = 0;
    for (auto m : counts) {
      expected += m * (m > 0 ? m - 1 : 0);
    }
    EXPECT_EQ(select_pairs(labels).size(), expected);
  }
}

TEST(Pairs, HasContrastNeedsTwoLabelsAndAPositive)
{
  EXPECT_FALSE(has_contrast(std::vector<std::size_t>{1, 1, 1}));
  EXPECT_FALSE(has_contrast(std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(has_contrast(std::vector<std::size_t>{0, 1, 1}));
}

ParamStore heads(ContrastiveVariant v, std::size_t hidden = 0, std::uint64_t seed = 0, bool with_domain = true)
{
  ParamStore s;
  add_projection_params(s, ProjectionDims{6, 4, hidden}, v, seed, with_domain);
  return s;
}

TEST(Heads, OutputsAreUnitNorm)
{
  for (std::size_t hidden : {0u, 5u}) {
    const ParamStore s = heads(ContrastiveVariant::hierarchical, hidden);
    Tape tape;
    Binding p(tape, s);
    const Projection out = project(p, tape.constant(random_array(7, 6, 4)));
    for (const Var & v : {out.role, out.domain}) {
      for (std::size_t i = 0; i < 7; ++i) {
        double n = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
          n += v.value()(i, c) * v.value()(i, c);
        }
        EXPECT_NEAR(n, 1.0, 1e-12);
      }
    }
  }
}

TEST(Heads, CreatedPerVariant)
{
  EXPECT_TRUE(heads(ContrastiveVariant::hierarchical).contains("proj.domain.out.w"));
  EXPECT_FALSE(heads(ContrastiveVariant::role_only).contains("proj.domain.out.w"));
  EXPECT_FALSE(heads(ContrastiveVariant::domain_only).contains("proj.role.out.w"));
  EXPECT_EQ(heads(ContrastiveVariant::shared_feature).size(), 0u);
  EXPECT_EQ(heads(ContrastiveVariant::off).size(), 0u);
  EXPECT_FALSE(heads(ContrastiveVariant::hierarchical, 0, 0, false).contains("proj.domain.out.w"));
  EXPECT_TRUE(heads(ContrastiveVariant::hierarchical, 3).contains("proj.role.hidden.w"));
}

TEST(Heads, RoleWeightsDoNotTouchDomainSpace)
{
  ParamStore s = heads(ContrastiveVariant::hierarchical);
  const Array z = random_array(5, 6, 5);
  auto domain_out = [&](const ParamStore & st) {
    Tape tape;
    Binding p(tape, st);
    return project(p, tape.constant(z)).domain.value();
  };
  const Array before = domain_out(s);
  s.at("proj.role.out.w") = random_array(6, 4, 6);
  EXPECT_EQ(domain_out(s), before);
}

TEST(Heads, RoleTermSendsNoGradientToDomainHead)
{
  const ParamStore s = heads(ContrastiveVariant::hierarchical, 3);
  Tape tape;
  Binding p(tape, s);
  const std::vector<std::size_t> roles = {0, 1, 1, 0, 1, 1}, domains = {0, 0, 0, 1, 1, 1};
  HierarchicalLoss l = hierarchical_loss(p, tape.constant(random_array(6, 6, 7)), roles, domains, 0.2, 1.0,
    ContrastiveVariant::hierarchical);
  tape.backward(l.role);
  const auto grads = p.gradients();
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.name(i).rfind("proj.domain", 0) == 0) {
      EXPECT_EQ(grads[i], Array(s.value(i).shape(), 0.0)) << s.name(i);
    }
  }
}

TEST(Hierarchical, OffIsZero)
{
  const ParamStore s;
  Tape tape;
  Binding p(tape, s);
  const std::vector<std::size_t> roles = {0, 1, 1}, domains = {0, 1, 2};
  EXPECT_EQ(hierarchical_loss(p, tape.constant(random_array(3, 6, 8)), roles, domains, 0.1, 1.0,
              ContrastiveVariant::off).total.item(), 0.0);
}

TEST(Hierarchical, SingleDomainBatchReducesToRoleTerm)
{
  const ParamStore s = heads(ContrastiveVariant::hierarchical);
  Tape tape;
  Binding p(tape, s);
  const std::vector<std::size_t> roles = {0, 1, 1, 0, 1, 1}, domains(6, 2);
  HierarchicalLoss l = hierarchical_loss(p, tape.constant(random_array(6, 6, 9)), roles, domains, 0.1, 1.0,
    ContrastiveVariant::hierarchical);
  EXPECT_TRUE(l.role_active);
  EXPECT_FALSE(l.domain_active);
  EXPECT_EQ(l.total.item(), l.role.item());
}

TEST(Hierarchical, WeightsDomainTermByLambda)
{
  const ParamStore s = heads(ContrastiveVariant::hierarchical);
  const std::vector<std::size_t> roles = {0, 1, 1, 0, 1, 1}, domains = {0, 0, 0, 1, 1, 1};
  const Array z = random_array(6, 6, 10);
  auto total = [&](double lc) {
    Tape tape;
    Binding p(tape, s);
    HierarchicalLoss l =
      hierarchical_loss(p, tape.constant(z), roles, domains, 0.1, lc, ContrastiveVariant::hierarchical);
    return std::make_tuple(l.total.item(), l.role.item(), l.domain.item());
  };
  const auto [t, r, d] = total(0.3);
  EXPECT_NEAR(t, r + 0.3 * d, 1e-12);
  EXPECT_THROW(total(-1.0), ConfigError);
}

TEST(Hierarchical, SharedFeatureUsesRawLatent)
{
  const ParamStore s;
  const std::vector<std::size_t> roles = {0, 1, 1, 0, 1, 1}, domains = {0, 0, 0, 1, 1, 1};
  const Array z = random_array(6, 6, 11);
  Tape tape;
  Binding p(tape, s);
  HierarchicalLoss l =
    hierarchical_loss(p, tape.constant(z), roles, domains, 0.1, 1.0, ContrastiveVariant::shared_feature);
  const Array e = normalized(z);
  EXPECT_NEAR(l.role.item(), nce_oracle(e, roles, 0.1), 1e-10);
  EXPECT_NEAR(l.domain.item(), nce_oracle(e, domains, 0.1), 1e-10);
}

class HierarchicalGradients : public ::testing::TestWithParam<ContrastiveVariant>
{
};

TEST_P(HierarchicalGradients, MatchFiniteDifferencesOverSeeds)
{
  const ContrastiveVariant v = GetParam();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto report = hierarchical_gradients(v, seed);
    EXPECT_LT(report.max_rel_err, 1e-4) << to_string(v) << " seed " << seed << " at " << report.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(
  Variants, HierarchicalGradients,
  ::testing::Values(ContrastiveVariant::hierarchical, ContrastiveVariant::role_only,
    ContrastiveVariant::domain_only, ContrastiveVariant::shared_feature),
  [](const auto & info) { return to_string(info.param); });

TEST(Variants, NamesRoundTrip)
{
  for (auto v : {ContrastiveVariant::hierarchical, ContrastiveVariant::role_only, ContrastiveVariant::domain_only,
         ContrastiveVariant::shared_feature, ContrastiveVariant::off}) {
    EXPECT_EQ(parse_contrastive_variant(to_string(v)), v);
  }
  EXPECT_THROW(parse_contrastive_variant("both"), ConfigError);
}

}  // namespace
