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

// mtraj command-line driver.
//
//   mtraj gen-data --profile basketball --out bb.jsonl --n 100 --seed 0
//   mtraj stats --data bb.jsonl --out stats.csv
//   mtraj train --data bb.jsonl --data fb.jsonl --data sc.jsonl --out run/
//   mtraj eval --ckpt run/checkpoint.json --data bb_test.jsonl --protocol u2s --out eval/
//   mtraj ablate --grid grid.json --out ablation/ --jobs 2
//   mtraj export-embeddings --ckpt run/checkpoint.json --data bb_test.jsonl --out emb.csv
//
// Every command prints its resolved configuration as JSON on stdout. On
// failure a single JSON error line goes to stderr and the exit code is 1.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtraj/mtraj.hpp"

namespace
{

using nlohmann::json;
using namespace mtraj;

std::ofstream open_out(const std::string & path)
{
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path);
  }
  return out;
}

void print_resolved(const std::string & command, json config)
{
  json j = {{"command", command}, {"config", std::move(config)}};
  std::cout << j.dump(2) << '\n';
}

/// Loads each file, normalizes raw-unit sets, and merges when there are several.
Dataset load_datasets(const std::vector<std::string> & paths)
{
  std::vector<Dataset> parts;
  for (const auto & p : paths) {
    Dataset ds = load_jsonl(p);
    parts.push_back(ds.normalized ? std::move(ds) : normalize(ds));
  }
  if (parts.size() == 1) {
    return parts.front();
  }
  return merge_unified(parts);
}

std::map<std::string, Dataset> split_by_domain(const Dataset & ds)
{
  std::map<std::string, Dataset> out;
  for (const auto & s : ds.sequences) {
    Dataset & d = out[s.domain];
    d.bounds = ds.bounds;
    d.units = ds.units;
    d.normalized = ds.normalized;
    d.sequences.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct GenArgs
{
  std::string profile = "basketball";
  std::string out;
  std::size_t n = 100;
  std::size_t agents = 5;
  std::size_t steps = 24;
  std::uint64_t seed = 0;
};

void run_gen(const GenArgs & a)
{
  print_resolved(
    "gen-data",
    {{"profile", a.profile}, {"out", a.out}, {"n", a.n}, {"agents", a.agents}, {"steps", a.steps}, {"seed", a.seed}});
  const Dataset ds = generate_synthetic(profile_by_name(a.profile), a.n, a.agents, a.steps, a.seed);
  save_jsonl(ds, a.out);
  write_gt_stats_csv(gt_stats(ds), std::cout);
}

struct StatsArgs
{
  std::vector<std::string> data;
  std::string out;
};

void run_stats(const StatsArgs & a)
{
  print_resolved("stats", {{"data", a.data}, {"out", a.out}});
  MetricsReport all;
  for (const auto & p : a.data) {
    const MetricsReport r = gt_stats(load_jsonl(p));
    for (const auto & [key, acc] : r.groups) {
      all.groups[key] = acc;
    }
  }
  auto out = open_out(a.out);
  write_gt_stats_csv(all, out);
}

struct TrainArgs
{
  std::string config;
  std::vector<std::string> data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  bool resume = false;
};

TrainConfig resolve_train_config(const std::string & path, std::optional<std::uint64_t> seed)
{
  TrainConfig c = path.empty() ? TrainConfig{} : load_train_config(path);
  if (seed) {
    c.seed = *seed;
  }
  c.validate();
  return c;
}

void run_train(const TrainArgs & a)
{
  TrainConfig cfg = resolve_train_config(a.config, a.seed);
  if (a.epochs) {
    cfg.epochs = *a.epochs;
    cfg.validate();
  }
  print_resolved("train", {{"data", a.data}, {"out", a.out}, {"resume", a.resume}, {"train", to_json(cfg)}});
  const Dataset ds = load_datasets(a.data);
  FitOptions opt;
  opt.out_dir = a.out;
  opt.verbose = true;
  if (a.resume) {
    opt.resume = checkpoint_load(a.out + "/checkpoint.json");
  }
  const FitResult r = fit(ds, cfg, opt);
  if (r.diverged) {
    throw NumericError("training diverged; last good checkpoint kept in " + a.out);
  }
}

struct EvalArgs
{
  std::string ckpt;
  std::vector<std::string> data;
  std::string protocol = "u2s";
  std::string out;
  std::size_t k = 20;
  std::uint64_t seed = 0;
  bool clip = false;
  bool full_sequence = false;
};

CompletionMethod method_for(const std::string & ckpt)
{
  for (const auto & name : baseline_names()) {
    if (ckpt == name) {
      return baseline_method(name);
    }
  }
  return model_method(checkpoint_load(ckpt));
}

void run_eval(const EvalArgs & a)
{
  EvalConfig ec;
  ec.protocol = parse_protocol(a.protocol);
  ec.k = a.k;
  ec.seed = a.seed;
  ec.clip = a.clip;
  ec.full_sequence = a.full_sequence;
  print_resolved(
    "eval", {{"ckpt", a.ckpt},
             {"data", a.data},
             {"protocol", to_string(ec.protocol)},
             {"out", a.out},
             {"k", ec.k},
             {"seed", ec.seed},
             {"clip", ec.clip},
             {"full_sequence", ec.full_sequence}});
  const CompletionMethod method = method_for(a.ckpt);
  ReportBundle bundle;
  for (const auto & [domain, ds] : split_by_domain(load_datasets(a.data))) {
    bundle[domain].push_back(evaluate(method, ds, ec));
  }
  write_bundle(bundle, a.out, to_string(ec.protocol) + "_" + method.name);
}

struct AblateArgs
{
  std::string grid;
  std::string config;
  std::string out;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
  std::size_t n_train = 200;
  std::size_t n_test = 50;
};

void run_ablate(const AblateArgs & a)
{
  AblationGrid grid;
  if (!a.grid.empty()) {
    std::ifstream in(a.grid);
    if (!in) {
      throw std::runtime_error("cannot open grid " + a.grid);
    }
    json j;
    try {
      in >> j;
    } catch (const json::exception & e) {
      throw ParseError("grid " + a.grid + ": " + e.what());
    }
    grid = ablation_grid_from_json(j);
  }
  const TrainConfig base = resolve_train_config(a.config, std::nullopt);
  json cells = json::array();
  for (const auto & c : grid.cells()) {
    cells.push_back({{"adapter", to_string(c.adapter)}, {"contrastive", to_string(c.contrastive)}, {"seed", c.seed}});
  }
  print_resolved(
    "ablate", {{"grid", a.grid},
               {"out", a.out},
               {"jobs", a.jobs},
               {"data_seed", a.seed},
               {"n_train", a.n_train},
               {"n_test", a.n_test},
               {"cells", cells},
               {"train", to_json(base)}});
  const SuiteData data = make_synthetic_suite(a.n_train, a.n_test, 5, base.model.steps, a.seed);
  const AblationResult r = ablation_suite(grid, data, base, EvalConfig{}, a.jobs);
  std::filesystem::create_directories(a.out);
  auto out = open_out(a.out + "/ablation.csv");
  write_ablation_csv(r, out);
  if (!r.failures.empty()) {
    throw std::runtime_error(std::to_string(r.failures.size()) + " ablation cell(s) failed");
  }
}

struct ExportArgs
{
  std::string ckpt;
  std::vector<std::string> data;
  std::string out;
};

void run_export(const ExportArgs & a)
{
  print_resolved("export-embeddings", {{"ckpt", a.ckpt}, {"data", a.data}, {"out", a.out}});
  const Checkpoint c = checkpoint_load(a.ckpt);
  const Dataset ds = load_datasets(a.data);
  auto out = open_out(a.out);
  out << "seq_id,agent_id,role,domain,space";
  for (std::size_t k = 0; k < c.model.d_p; ++k) {
    out << ",c" << k;
  }
  out << '\n';
  for (std::size_t s = 0; s < ds.size(); ++s) {
    const SceneSequence & seq = ds.sequences[s];
    const Embeddings e = embed(c.params, c.model, make_batch(seq, c.model));
    for (std::size_t i = 0; i < seq.agents; ++i) {
      for (const auto & [space, m] : {std::pair<const char *, const Array *>{"role", &e.role}, {"domain", &e.domain}}) {
        out << s << ',' << i << ',' << to_string(seq.roles[i]) << ',' << seq.domain << ',' << space;
        for (std::size_t k = 0; k < m->cols(); ++k) {
          out << ',' << format_double((*m)(i, k));
        }
        out << '\n';
      }
    }
  }
}

const char * error_kind(const std::exception & e)
{
  if (dynamic_cast<const ConfigError *>(&e)) {
    return "config";
  }
  if (dynamic_cast<const ParseError *>(&e)) {
    return "parse";
  }
  if (dynamic_cast<const ValidationError *>(&e)) {
    return "validation";
  }
  if (dynamic_cast<const DimensionError *>(&e)) {
    return "dimension";
  }
  if (dynamic_cast<const NumericError *>(&e)) {
    return "numeric";
  }
  return "runtime";
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"masked multi-agent trajectory completion"};
  app.require_subcommand(1);

  GenArgs gen;
  auto * c_gen = app.add_subcommand("gen-data", "Generate a synthetic dataset (JSONL)");
  c_gen->add_option("--profile", gen.profile, "basketball | football | soccer")->capture_default_str();
  c_gen->add_option("--out", gen.out, "Output JSONL")->required();
  c_gen->add_option("--n", gen.n, "Number of sequences")->capture_default_str();
  c_gen->add_option("--agents", gen.agents, "Agents per scene (ball + players)")->capture_default_str();
  c_gen->add_option("--steps", gen.steps, "Steps per sequence")->capture_default_str();
  c_gen->add_option("--seed", gen.seed)->capture_default_str();

  StatsArgs stats;
  auto * c_stats = app.add_subcommand("stats", "Ground-truth motion statistics (CSV)");
  c_stats->add_option("--data", stats.data, "Input JSONL (repeatable)")->required();
  c_stats->add_option("--out", stats.out, "Output CSV")->required();

  TrainArgs train;
  auto * c_train = app.add_subcommand("train", "Train the model");
  c_train->add_option("--config", train.config, "Training config (JSON)");
  c_train->add_option("--data", train.data, "Training JSONL; several are merged")->required();
  c_train->add_option("--out", train.out, "Output directory")->required();
  c_train->add_option("--seed", train.seed, "Overrides the config seed");
  c_train->add_option("--epochs", train.epochs, "Overrides the config epoch count");
  c_train->add_flag("--resume", train.resume, "Continue from <out>/checkpoint.json");

  EvalArgs ev;
  auto * c_eval = app.add_subcommand("eval", "Evaluate a checkpoint or a baseline");
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint path, or mean | median | linear_fit")->required();
  c_eval->add_option("--data", ev.data, "Test JSONL (repeatable)")->required();
  c_eval->add_option("--protocol", ev.protocol, "s2s | u2s")->capture_default_str();
  c_eval->add_option("--out", ev.out, "Output directory")->required();
  c_eval->add_option("--k", ev.k, "Samples per sequence")->capture_default_str();
  c_eval->add_option("--seed", ev.seed)->capture_default_str();
  c_eval->add_flag("--clip", ev.clip, "Clamp completions into the field");
  c_eval->add_flag("--full-sequence", ev.full_sequence, "Score every step");

  AblateArgs abl;
  auto * c_abl = app.add_subcommand("ablate", "Run the adapter/contrastive ablation grid");
  c_abl->add_option("--grid", abl.grid, "Grid JSON (default: both variant tables, seed 0)");
  c_abl->add_option("--config", abl.config, "Base training config (JSON)");
  c_abl->add_option("--out", abl.out, "Output directory")->required();
  c_abl->add_option("--jobs", abl.jobs, "Cells trained concurrently")->capture_default_str();
  c_abl->add_option("--seed", abl.seed, "Synthetic data seed")->capture_default_str();
  c_abl->add_option("--n-train", abl.n_train)->capture_default_str();
  c_abl->add_option("--n-test", abl.n_test)->capture_default_str();

  ExportArgs exp;
  auto * c_exp = app.add_subcommand("export-embeddings", "Write role/domain embeddings (CSV)");
  c_exp->add_option("--ckpt", exp.ckpt, "Checkpoint path")->required();
  c_exp->add_option("--data", exp.data, "Input JSONL (repeatable)")->required();
  c_exp->add_option("--out", exp.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);
    }
    std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  try {
    if (c_gen->parsed()) {
      run_gen(gen);
    } else if (c_stats->parsed()) {
      run_stats(stats);
    } else if (c_train->parsed()) {
      run_train(train);
    } else if (c_eval->parsed()) {
      run_eval(ev);
    } else if (c_abl->parsed()) {
      run_ablate(abl);
    } else if (c_exp->parsed()) {
      run_export(exp);
    }
  } catch (const std::exception & e) {
    std::cerr << json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 0;
}
