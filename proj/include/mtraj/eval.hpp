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

#ifndef MTRAJ__EVAL_HPP_
#define MTRAJ__EVAL_HPP_

// Statistical baselines, the evaluation loop, the single-domain (S2S) and
// unified (U2S) protocols, and the ablation runner.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "mtraj/common.hpp"
#include "mtraj/data.hpp"
#include "mtraj/metrics.hpp"
#include "mtraj/model.hpp"
#include "mtraj/train.hpp"

namespace mtraj
{

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

namespace detail
{
template <typename Fill>
std::vector<double> fill_missing(const SceneSequence & s, Fill fill)
{
  std::vector<double> out = s.xy;
  for (std::size_t i = 0; i < s.agents; ++i) {
    std::vector<std::size_t> seen;
    for (std::size_t t = 0; t < s.steps; ++t) {
      if (s.observed(i, t)) {
        seen.push_back(t);
      }
    }
    if (seen.empty()) {
      throw ValidationError("baseline: agent " + std::to_string(i) + " has no observed step");
    }
    fill(s, i, seen, out);
  }
  return out;
}

inline double median_of(std::vector<double> v)
{
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

/// Missing steps take the agent's mean observed position.
inline std::vector<double> baseline_mean(const SceneSequence & s)
{
  return detail::fill_missing(s, [](const SceneSequence & q, std::size_t i, const auto & seen, auto & out) {
    double mx = 0.0, my = 0.0;
    for (auto t : seen) {
      mx += q.x(i, t);
      my += q.y(i, t);
    }
    mx /= static_cast<double>(seen.size());
    my /= static_cast<double>(seen.size());
    for (std::size_t t = 0; t < q.steps; ++t) {
      if (!q.observed(i, t)) {
        out[(i * q.steps + t) * 2] = mx;
        out[(i * q.steps + t) * 2 + 1] = my;
      }
    }
  });
}

/// Missing steps take the coordinate-wise median of the agent's observed positions.
inline std::vector<double> baseline_median(const SceneSequence & s)
{
  return detail::fill_missing(s, [](const SceneSequence & q, std::size_t i, const auto & seen, auto & out) {
    std::vector<double> xs, ys;
    for (auto t : seen) {
      xs.push_back(q.x(i, t));
      ys.push_back(q.y(i, t));
    }
    const double mx = detail::median_of(xs), my = detail::median_of(ys);
    for (std::size_t t = 0; t < q.steps; ++t) {
      if (!q.observed(i, t)) {
        out[(i * q.steps + t) * 2] = mx;
        out[(i * q.steps + t) * 2 + 1] = my;
      }
    }
  });
}

struct LineFit
{
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares of v on t. Needs two distinct t values.
inline LineFit ols_fit(std::span<const double> t, std::span<const double> v)
{
  const double n = static_cast<double>(t.size());
  double mt = 0.0, mv = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    mt += t[k];
    mv += v[k];
  }
  mt /= n;
  mv /= n;
  double stt = 0.0, stv = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    stt += (t[k] - mt) * (t[k] - mt);
    stv += (t[k] - mt) * (v[k] - mv);
  }
  if (stt == 0.0) {
    throw DomainError("ols_fit: degenerate abscissa");
  }
  const double slope = stv / stt;
  return {slope, mv - slope * mt};
}

/// Per agent and coordinate, the least-squares line through the observed
/// steps, evaluated at the missing ones. Agents with a single observed step
/// fall back to the mean fill.
inline std::vector<double> baseline_linear_fit(const SceneSequence & s)
{
  return detail::fill_missing(s, [](const SceneSequence & q, std::size_t i, const auto & seen, auto & out) {
    if (seen.size() < 2) {
      logging::warn("linear_fit: agent " + std::to_string(i) + " has one observed step; using mean fill");
      for (std::size_t t = 0; t < q.steps; ++t) {
        out[(i * q.steps + t) * 2] = q.x(i, seen.front());
        out[(i * q.steps + t) * 2 + 1] = q.y(i, seen.front());
      }
      return;
    }
    std::vector<double> ts, xs, ys;
    for (auto t : seen) {
      ts.push_back(static_cast<double>(t));
      xs.push_back(q.x(i, t));
      ys.push_back(q.y(i, t));
    }
    const LineFit fx = ols_fit(ts, xs), fy = ols_fit(ts, ys);
    for (std::size_t t = 0; t < q.steps; ++t) {
      if (!q.observed(i, t)) {
        out[(i * q.steps + t) * 2] = fx.intercept + fx.slope * static_cast<double>(t);
        out[(i * q.steps + t) * 2 + 1] = fy.intercept + fy.slope * static_cast<double>(t);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Completion methods
// ---------------------------------------------------------------------------

/// samples[scene][k] is one completed N*T*2 trajectory.
using CompleteFn = std::function<std::vector<std::vector<std::vector<double>>>(
  const std::vector<const SceneSequence *> & scenes, std::size_t k, std::span<const std::uint64_t> seeds)>;

struct CompletionMethod
{
  std::string name;
  /// Deterministic methods are asked for a single sample.
  bool stochastic = false;
  CompleteFn complete;
  /// Domains the method was trained on; empty for training-free methods.
  std::vector<std::string> trained_domains;
};

inline const std::vector<std::string> & baseline_names()
{
  static const std::vector<std::string> names = {"mean", "median", "linear_fit"};
  return names;
}

/// "mean", "median", "linear_fit", or "ground_truth" (returns the true
/// trajectory, for self-checks).
inline CompletionMethod baseline_method(const std::string & name)
{
  std::function<std::vector<double>(const SceneSequence &)> fn;
  if (name == "mean") {
    fn = baseline_mean;
  } else if (name == "median") {
    fn = baseline_median;
  } else if (name == "linear_fit") {
    fn = baseline_linear_fit;
  } else if (name == "ground_truth") {
    fn = [](const SceneSequence & s) { return s.xy; };
  } else {
    throw ConfigError("unknown baseline '" + name + "'");
  }
  CompletionMethod m;
  m.name = name;
  m.complete = [fn](const std::vector<const SceneSequence *> & scenes, std::size_t, std::span<const std::uint64_t>) {
    std::vector<std::vector<std::vector<double>>> out;
    for (const auto * s : scenes) {
      out.push_back({fn(*s)});
    }
    return out;
  };
  return m;
}

/// The trained CVAE, sampling through the prior.
inline CompletionMethod model_method(
  ParamStore params, ModelConfig config, std::vector<std::string> trained_domains, std::string name = "model")
{
  CompletionMethod m;
  m.name = std::move(name);
  m.stochastic = true;
  m.trained_domains = std::move(trained_domains);
  m.complete = [params = std::move(params), config = std::move(config)](
                 const std::vector<const SceneSequence *> & scenes, std::size_t k,
                 std::span<const std::uint64_t> seeds) {
      const Batch b = make_batch(scenes, config);
      const auto samples = sample_batch(params, config, b, k, seeds);
      const std::size_t width = b.agents * b.steps * 2;
      std::vector<std::vector<std::vector<double>>> out(scenes.size());
      for (std::size_t s = 0; s < scenes.size(); ++s) {
        for (const auto & a : samples) {
          out[s].emplace_back(a.values().begin() + s * width, a.values().begin() + (s + 1) * width);
        }
      }
      return out;
    };
  return m;
}

inline CompletionMethod model_method(const Checkpoint & c, std::string name = "model")
{
  return model_method(c.params, c.model, c.trained_domains, std::move(name));
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

enum class Protocol { s2s, u2s };

inline std::string to_string(Protocol p) { return p == Protocol::s2s ? "s2s" : "u2s"; }

inline Protocol parse_protocol(const std::string & s)
{
  if (s == "s2s" || s == "S2S") {
    return Protocol::s2s;
  }
  if (s == "u2s" || s == "U2S") {
    return Protocol::u2s;
  }
  throw ConfigError("unknown protocol '" + s + "'");
}

struct EvalConfig
{
  Protocol protocol = Protocol::u2s;
  std::size_t k = 20;
  /// Prediction suffix; 0 = T / 2.
  std::size_t horizon = 0;
  /// Extra random drop rate inside the observed prefix.
  double prefix_ratio = 0.2;
  std::uint64_t seed = 0;
  /// Clamp completions into the field before scoring.
  bool clip = false;
  /// Score every step instead of the missing ones only.
  bool full_sequence = false;
  std::size_t batch_size = 64;
};

/// The evaluation mask of sequence `index`.
inline SceneSequence with_eval_mask(const SceneSequence & s, const EvalConfig & c, std::size_t index)
{
  MaskSpec spec;
  spec.pattern = MaskPattern::prediction;
  spec.horizon = c.horizon == 0 ? s.steps / 2 : c.horizon;
  spec.prefix_ratio = c.prefix_ratio;
  spec.seed = derive_seed(c.seed, {0x6576616cULL, index});
  SceneSequence out = s;
  out.mask = make_mask(spec, s.agents, s.steps);
  return out;
}

namespace detail
{
inline void clip_to(std::vector<double> & xy, const FieldBounds & b)
{
  for (std::size_t k = 0; k + 1 < xy.size(); k += 2) {
    xy[k] = std::clamp(xy[k], b.x_min, b.x_max);
    xy[k + 1] = std::clamp(xy[k + 1], b.y_min, b.y_max);
  }
}

inline std::vector<double> agent_points(std::span<const double> scene, std::size_t steps, std::span<const std::size_t> ids)
{
  std::vector<double> out;
  for (auto i : ids) {
    out.insert(out.end(), scene.begin() + i * steps * 2, scene.begin() + (i + 1) * steps * 2);
  }
  return out;
}
}  // namespace detail

/// Scores `method` on every sequence of `ds` under the evaluation mask.
/// Metrics are grouped by (domain, role) with role in {ball, player, all}.
inline MetricsReport evaluate(const CompletionMethod & method, const Dataset & ds, const EvalConfig & cfg)
{
  if (ds.empty()) {
    throw ValidationError("evaluate: empty dataset");
  }
  if (cfg.k == 0) {
    throw ConfigError("evaluate: K must be >= 1");
  }
  if (!method.trained_domains.empty()) {
    for (const auto & d : ds.domains()) {
      const bool seen = std::find(method.trained_domains.begin(), method.trained_domains.end(), d) !=
                        method.trained_domains.end();
      if (!seen || (cfg.protocol == Protocol::s2s && method.trained_domains.size() != 1)) {
        logging::warn(
          "evaluate: " + method.name + " was trained on a domain set that does not match the " +
          to_string(cfg.protocol) + " contract for test domain '" + d + "'");
      }
    }
  }
  MetricsReport report;
  report.protocol = to_string(cfg.protocol) + "/" + method.name;
  const std::size_t k = method.stochastic ? cfg.k : 1;
  const std::size_t bs = std::max<std::size_t>(cfg.batch_size, 1);

  for (std::size_t begin = 0; begin < ds.size(); begin += bs) {
    const std::size_t end = std::min(ds.size(), begin + bs);
    std::vector<SceneSequence> masked;
    std::vector<std::uint64_t> seeds;
    for (std::size_t idx = begin; idx < end; ++idx) {
      masked.push_back(with_eval_mask(ds.sequences[idx], cfg, idx));
      seeds.push_back(derive_seed(cfg.seed, {0x73616d70ULL, idx}));
    }
    std::vector<const SceneSequence *> ptrs;
    for (const auto & m : masked) {
      ptrs.push_back(&m);
    }
    auto samples = method.complete(ptrs, k, seeds);

    for (std::size_t s = 0; s < masked.size(); ++s) {
      const SceneSequence & truth = ds.sequences[begin + s];
      const SceneSequence & seq = masked[s];
      auto & ks = samples[s];
      if (cfg.clip) {
        for (auto & y : ks) {
          detail::clip_to(y, truth.bounds);
        }
      }
      const AdeResult overall = min_ade_k(ks, truth.xy, seq.mask, cfg.full_sequence);
      const auto & best = ks[overall.best];
      detail::add_motion_stats(report, truth, best);
      for (const char * role_name : {"ball", "player", "all"}) {
        std::vector<std::size_t> ids;
        if (std::string(role_name) == "all") {
          for (std::size_t i = 0; i < truth.agents; ++i) {
            ids.push_back(i);
          }
        } else {
          ids = detail::agents_with_role(truth, std::string(role_name) == "ball" ? Role::ball : Role::player);
        }
        if (ids.empty()) {
          continue;
        }
        auto & acc = report.groups[{truth.domain, role_name}];
        try {
          acc.add("min_ade", min_ade_k_agents(ks, truth.xy, seq.mask, truth.steps, ids, cfg.full_sequence).value);
        } catch (const EvaluationRegionError &) {
          // No missing entries for this role in this scene.
        }
        acc.add("oob", oob(detail::agent_points(best, truth.steps, ids), truth.bounds));
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

/// Normalized train/test splits per domain.
struct SuiteData
{
  std::map<std::string, Dataset> train;
  std::map<std::string, Dataset> test;
};

/// The default synthetic multi-sport suite: basketball-, football- and
/// soccer-like profiles, normalized to the unit square.
inline SuiteData make_synthetic_suite(
  std::size_t n_train = 200, std::size_t n_test = 50, std::size_t agents = 5, std::size_t steps = 24,
  std::uint64_t seed = 0)
{
  SuiteData d;
  for (const auto & p : {basketball_profile(), football_profile(), soccer_profile()}) {
    d.train[p.domain] = normalize(generate_synthetic(p, n_train, agents, steps, derive_seed(seed, {1})));
    d.test[p.domain] = normalize(generate_synthetic(p, n_test, agents, steps, derive_seed(seed, {2})));
  }
  return d;
}

/// Reports per test domain: the baselines first, then the model.
using ReportBundle = std::map<std::string, std::vector<MetricsReport>>;

inline void write_bundle(const ReportBundle & bundle, const std::string & out_dir, const std::string & prefix)
{
  std::filesystem::create_directories(out_dir);
  for (const auto & [domain, reports] : bundle) {
    const std::string path = out_dir + "/" + prefix + "_" + domain + ".csv";
    std::ofstream out(path);
    if (!out) {
      throw std::runtime_error("cannot write " + path);
    }
    bool header = true;
    for (const auto & r : reports) {
      r.write_csv(out, header);
      header = false;
    }
  }
}

namespace detail
{
inline std::vector<MetricsReport> baseline_reports(const Dataset & test, const EvalConfig & cfg)
{
  std::vector<MetricsReport> out;
  for (const auto & name : baseline_names()) {
    out.push_back(evaluate(baseline_method(name), test, cfg));
  }
  return out;
}
}  // namespace detail

/// One model per domain, trained and tested on that domain alone.
inline ReportBundle run_s2s(
  const SuiteData & data, const TrainConfig & train, const EvalConfig & eval, const std::string & out_dir = {})
{
  ReportBundle bundle;
  EvalConfig cfg = eval;
  cfg.protocol = Protocol::s2s;
  for (const auto & [domain, test] : data.test) {
    auto it = data.train.find(domain);
    if (it == data.train.end()) {
      throw ValidationError("run_s2s: no training set for domain '" + domain + "'");
    }
    FitOptions opt;
    if (!out_dir.empty()) {
      opt.out_dir = out_dir + "/s2s_" + domain;
    }
    const FitResult fr = fit(it->second, train, opt);
    auto reports = detail::baseline_reports(test, cfg);
    reports.push_back(evaluate(model_method(fr.state), test, cfg));
    bundle[domain] = std::move(reports);
  }
  if (!out_dir.empty()) {
    write_bundle(bundle, out_dir, "s2s");
  }
  return bundle;
}

inline Dataset merged_train(const SuiteData & data)
{
  std::vector<Dataset> parts;
  for (const auto & [domain, ds] : data.train) {
    parts.push_back(ds);
  }
  return merge_unified(parts);
}

/// One model trained on the merged training sets, tested per domain.
inline ReportBundle run_u2s(
  const SuiteData & data, const TrainConfig & train, const EvalConfig & eval, const std::string & out_dir = {})
{
  if (data.train.size() < 2) {
    throw ValidationError("run_u2s: needs at least two training domains");
  }
  EvalConfig cfg = eval;
  cfg.protocol = Protocol::u2s;
  FitOptions opt;
  if (!out_dir.empty()) {
    opt.out_dir = out_dir + "/u2s_model";
  }
  const FitResult fr = fit(merged_train(data), train, opt);
  const CompletionMethod model = model_method(fr.state);
  ReportBundle bundle;
  for (const auto & [domain, test] : data.test) {
    auto reports = detail::baseline_reports(test, cfg);
    reports.push_back(evaluate(model, test, cfg));
    bundle[domain] = std::move(reports);
  }
  if (!out_dir.empty()) {
    write_bundle(bundle, out_dir, "u2s");
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

struct AblationCell
{
  AdapterVariant adapter = AdapterVariant::token_wise;
  ContrastiveVariant contrastive = ContrastiveVariant::hierarchical;
  std::uint64_t seed = 0;
};

/// `cross`: every adapter variant with every contrastive variant.
/// `table`: adapter variants with the default contrastive variant, then
/// contrastive variants with the default adapter (shared cells run once but
/// are reported under both listings).
enum class GridLayout { cross, table };

struct AblationGrid
{
  std::vector<AdapterVariant> adapters = {
    AdapterVariant::no_gating, AdapterVariant::feature_wise, AdapterVariant::token_wise};
  std::vector<ContrastiveVariant> contrastives = {
    ContrastiveVariant::role_only, ContrastiveVariant::domain_only, ContrastiveVariant::shared_feature,
    ContrastiveVariant::hierarchical};
  std::vector<std::uint64_t> seeds = {0};
  GridLayout layout = GridLayout::table;
  AdapterVariant default_adapter = AdapterVariant::token_wise;
  ContrastiveVariant default_contrastive = ContrastiveVariant::hierarchical;

  void validate() const
  {
    if (adapters.empty() || contrastives.empty() || seeds.empty()) {
      throw ConfigError("ablation grid: variant and seed lists must be non-empty");
    }
  }

  /// Reported cells, in order (may repeat a configuration under `table`).
  std::vector<AblationCell> cells() const
  {
    validate();
    std::vector<AblationCell> out;
    for (auto seed : seeds) {
      if (layout == GridLayout::cross) {
        for (auto a : adapters) {
          for (auto c : contrastives) {
            out.push_back({a, c, seed});
          }
        }
      } else {
        for (auto a : adapters) {
          out.push_back({a, default_contrastive, seed});
        }
        for (auto c : contrastives) {
          out.push_back({default_adapter, c, seed});
        }
      }
    }
    return out;
  }
};

inline AblationGrid ablation_grid_from_json(const nlohmann::json & j)
{
  AblationGrid g;
  for (const auto & [key, value] : j.items()) {
    if (key == "adapter_variants") {
      g.adapters.clear();
      for (const auto & v : value) {
        g.adapters.push_back(parse_adapter_variant(v.get<std::string>()));
      }
    } else if (key == "contrastive_variants") {
      g.contrastives.clear();
      for (const auto & v : value) {
        g.contrastives.push_back(parse_contrastive_variant(v.get<std::string>()));
      }
    } else if (key == "seeds") {
      g.seeds = value.get<std::vector<std::uint64_t>>();
    } else if (key == "layout") {
      const auto s = value.get<std::string>();
      if (s != "cross" && s != "table") {
        throw ConfigError("ablation grid: layout must be 'cross' or 'table'");
      }
      g.layout = s == "cross" ? GridLayout::cross : GridLayout::table;
    } else if (key == "default_adapter") {
      g.default_adapter = parse_adapter_variant(value.get<std::string>());
    } else if (key == "default_contrastive") {
      g.default_contrastive = parse_contrastive_variant(value.get<std::string>());
    } else {
      throw ConfigError("ablation grid: unknown key '" + key + "'");
    }
  }
  g.validate();
  return g;
}

struct AblationRow
{
  AblationCell cell;
  std::string domain;
  std::string metric;
  double value = 0.0;
};

struct AblationResult
{
  std::vector<AblationRow> rows;
  /// Cells that threw, with the message.
  std::vector<std::pair<AblationCell, std::string>> failures;
};

inline void write_ablation_csv(const AblationResult & r, std::ostream & out)
{
  out << "adapter_variant,contrastive_variant,seed,domain,metric,value\n";
  for (const auto & row : r.rows) {
    out << to_string(row.cell.adapter) << ',' << to_string(row.cell.contrastive) << ',' << row.cell.seed
        << ',' << row.domain << ',' << row.metric << ',' << format_double(row.value) << '\n';
  }
}

/// Trains and evaluates every cell under U2S with a fixed budget (`base`
/// epochs, batch size, ...). The cell seed replaces base.seed and eval.seed.
/// `jobs` > 1 runs cells on that many threads; results do not depend on it.
inline AblationResult ablation_suite(
  const AblationGrid & grid, const SuiteData & data, const TrainConfig & base, const EvalConfig & eval,
  std::size_t jobs = 1)
{
  const auto reported = grid.cells();
  std::vector<AblationCell> unique;
  auto same = [](const AblationCell & a, const AblationCell & b) {
    return a.adapter == b.adapter && a.contrastive == b.contrastive && a.seed == b.seed;
  };
  for (const auto & c : reported) {
    if (std::none_of(unique.begin(), unique.end(), [&](const auto & u) { return same(u, c); })) {
      unique.push_back(c);
    }
  }

  const Dataset train = merged_train(data);
  std::vector<std::vector<AblationRow>> results(unique.size());
  std::vector<std::string> errors(unique.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < unique.size(); i = next++) {
      const AblationCell & cell = unique[i];
      try {
        TrainConfig tc = base;
        tc.seed = cell.seed;
        tc.model.adapter = cell.adapter;
        tc.model.contrastive = cell.contrastive;
        EvalConfig ec = eval;
        ec.protocol = Protocol::u2s;
        ec.seed = cell.seed;
        const FitResult fr = fit(train, tc);
        const CompletionMethod model = model_method(fr.state);
        for (const auto & [domain, test] : data.test) {
          const MetricsReport rep = evaluate(model, test, ec);
          for (const auto & m : metric_names()) {
            const double v = rep.value(domain, "all", m);
            if (!std::isnan(v)) {
              results[i].push_back({cell, domain, m, v});
            }
          }
        }
      } catch (const std::exception & e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(unique.size(), 1));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back(worker);
    }
    for (auto & t : pool) {
      t.join();
    }
  }

  AblationResult out;
  for (const auto & c : reported) {
    const std::size_t i = static_cast<std::size_t>(
      std::find_if(unique.begin(), unique.end(), [&](const auto & u) { return same(u, c); }) - unique.begin());
    if (!errors[i].empty()) {
      out.failures.emplace_back(c, errors[i]);
      logging::warn(
        "ablation cell " + to_string(c.adapter) + "/" + to_string(c.contrastive) + "/seed " +
        std::to_string(c.seed) + " failed: " + errors[i]);
      continue;
    }
    for (auto row : results[i]) {
      row.cell = c;
      out.rows.push_back(row);
    }
  }
  return out;
}

/// Mean of `metric` over seeds and domains for one variant pair.
inline double ablation_mean(
  const AblationResult & r, AdapterVariant a, ContrastiveVariant c, const std::string & metric)
{
  double sum = 0.0;
  std::size_t n = 0;
  std::vector<std::tuple<std::uint64_t, std::string>> seen;
  for (const auto & row : r.rows) {
    if (row.cell.adapter != a || row.cell.contrastive != c || row.metric != metric) {
      continue;
    }
    const auto key = std::make_tuple(row.cell.seed, row.domain);
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      continue;
    }
    seen.push_back(key);
    sum += row.value;
    ++n;
  }
  return n == 0 ? std::nan("") : sum / static_cast<double>(n);
}

}  // namespace mtraj

#endif  // MTRAJ__EVAL_HPP_
