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

#ifndef MTRAJ__TRAIN_HPP_
#define MTRAJ__TRAIN_HPP_

// Adam with step decay, the epoch loop, and JSON checkpoints.
//
// All randomness of an epoch (shuffle order, training masks, latent noise) is
// derived from (seed, epoch, ...) rather than carried in generator state, so a
// run resumed from a checkpoint replays exactly what an uninterrupted run does.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtraj/common.hpp"
#include "mtraj/data.hpp"
#include "mtraj/losses.hpp"
#include "mtraj/model.hpp"
#include "mtraj/params.hpp"

namespace mtraj
{

struct TrainConfig
{
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr0 = 1e-3;
  double decay_factor = 0.9;
  std::size_t decay_every = 20;
  std::uint64_t seed = 0;
  std::size_t k_train = 5;
  LossWeights weights;
  ModelConfig model;
  MaskPattern train_mask = MaskPattern::mixed;
  double train_missing_ratio = 0.3;
  /// Prediction horizon of training masks; 0 = T / 2.
  std::size_t train_horizon = 0;
  double train_prefix_ratio = 0.2;
  std::size_t checkpoint_every = 10;
  /// Linear KL warm-up length in epochs; 0 disables it.
  std::size_t kl_warmup_epochs = 0;

  void validate() const
  {
    if (epochs < 1) {
      throw ConfigError("train: epochs must be >= 1");
    }
    if (batch_size < 1) {
      throw ConfigError("train: batch_size must be >= 1");
    }
    if (!(lr0 > 0.0)) {
      throw ConfigError("train: lr0 must be > 0");
    }
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
      throw ConfigError("train: decay_factor must be in (0, 1]");
    }
    if (decay_every < 1) {
      throw ConfigError("train: decay_every must be >= 1");
    }
    if (k_train < 1) {
      throw ConfigError("train: k_train must be >= 1");
    }
    if (!(train_missing_ratio > 0.0 && train_missing_ratio < 1.0)) {
      throw ConfigError("train: train_missing_ratio must be in (0, 1)");
    }
    if (!(train_prefix_ratio >= 0.0 && train_prefix_ratio < 1.0)) {
      throw ConfigError("train: train_prefix_ratio must be in [0, 1)");
    }
    weights.validate();
    model.validate();
  }
};

inline nlohmann::json to_json(const TrainConfig & c)
{
  return {
    {"epochs", c.epochs},
    {"batch_size", c.batch_size},
    {"lr0", c.lr0},
    {"decay_factor", c.decay_factor},
    {"decay_every", c.decay_every},
    {"seed", c.seed},
    {"k_train", c.k_train},
    {"lambda1", c.weights.lambda1},
    {"lambda2", c.weights.lambda2},
    {"lambda3", c.weights.lambda3},
    {"lambda4", c.weights.lambda4},
    {"lambda_c", c.weights.lambda_c},
    {"d_model", c.model.d_model},
    {"d_z", c.model.d_z},
    {"encoder_heads", c.model.encoder_heads},
    {"adapter_heads", c.model.adapter_heads},
    {"adapter_variant", to_string(c.model.adapter)},
    {"adapter_placement", to_string(c.model.placement)},
    {"adapter_scene_keys", c.model.adapter_scene_keys},
    {"contrastive_variant", to_string(c.model.contrastive)},
    {"d_p", c.model.d_p},
    {"proj_hidden", c.model.proj_hidden},
    {"temperature", c.model.temperature},
    {"contrast_on_mean", c.model.contrast_on_mean},
    {"train_mask", to_string(c.train_mask)},
    {"train_missing_ratio", c.train_missing_ratio},
    {"train_horizon", c.train_horizon},
    {"train_prefix_ratio", c.train_prefix_ratio},
    {"checkpoint_every", c.checkpoint_every},
    {"kl_warmup_epochs", c.kl_warmup_epochs},
  };
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json & j)
{
  if (!j.is_object()) {
    throw ConfigError("train config must be a JSON object");
  }
  TrainConfig c;
  const nlohmann::json known = to_json(c);
  for (const auto & [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw ConfigError("train config: unknown key '" + key + "'");
    }
  }
  auto get = [&](const char * key, auto & field) {
    if (j.contains(key)) {
      try {
        j.at(key).get_to(field);
      } catch (const nlohmann::json::exception & e) {
        throw ConfigError(std::string("train config: bad value for '") + key + "': " + e.what());
      }
    }
  };
  auto get_enum = [&](const char * key, auto parse, auto & field) {
    if (j.contains(key)) {
      field = parse(j.at(key).get<std::string>());
    }
  };
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("lr0", c.lr0);
  get("decay_factor", c.decay_factor);
  get("decay_every", c.decay_every);
  get("seed", c.seed);
  get("k_train", c.k_train);
  get("lambda1", c.weights.lambda1);
  get("lambda2", c.weights.lambda2);
  get("lambda3", c.weights.lambda3);
  get("lambda4", c.weights.lambda4);
  get("lambda_c", c.weights.lambda_c);
  get("d_model", c.model.d_model);
  get("d_z", c.model.d_z);
  get("encoder_heads", c.model.encoder_heads);
  get("adapter_heads", c.model.adapter_heads);
  get_enum("adapter_variant", parse_adapter_variant, c.model.adapter);
  get_enum("adapter_placement", parse_adapter_placement, c.model.placement);
  get("adapter_scene_keys", c.model.adapter_scene_keys);
  get_enum("contrastive_variant", parse_contrastive_variant, c.model.contrastive);
  get("d_p", c.model.d_p);
  get("proj_hidden", c.model.proj_hidden);
  get("temperature", c.model.temperature);
  get("contrast_on_mean", c.model.contrast_on_mean);
  get_enum("train_mask", parse_mask_pattern, c.train_mask);
  get("train_missing_ratio", c.train_missing_ratio);
  get("train_horizon", c.train_horizon);
  get("train_prefix_ratio", c.train_prefix_ratio);
  get("checkpoint_every", c.checkpoint_every);
  get("kl_warmup_epochs", c.kl_warmup_epochs);
  c.validate();
  return c;
}

inline TrainConfig load_train_config(const std::string & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception & e) {
    throw ParseError("config " + path + ": " + e.what());
  }
  return train_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamState
{
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::size_t skipped = 0;
  std::vector<Array> m;
  std::vector<Array> v;
};

inline AdamState make_adam(const ParamStore & params)
{
  AdamState s;
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m.emplace_back(params.value(i).shape(), 0.0);
    s.v.emplace_back(params.value(i).shape(), 0.0);
  }
  return s;
}

/// Bias-corrected Adam update. Parameters with `update[i] == false` are left
/// untouched (moments included). Returns false, and changes nothing, when any
/// gradient is non-finite.
inline bool adam_step(
  ParamStore & params, const std::vector<Array> & grads, AdamState & state, double lr,
  const std::vector<bool> & update = {})
{
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw DimensionError("adam_step: gradients, moments and parameters are not aligned");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params.value(i).shape()) {
      throw DimensionError("adam_step: gradient shape mismatch for " + params.name(i));
    }
    if (!grads[i].all_finite()) {
      ++state.skipped;
      logging::warn("adam_step: non-finite gradient for " + params.name(i) + "; step skipped");
      return false;
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!update.empty() && !update[i]) {
      continue;
    }
    auto w = params.value(i).data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
    }
  }
  return true;
}

/// lr0 * decay_factor ^ floor(epoch / decay_every), epoch counted from 0.
inline double lr_schedule(std::size_t epoch, const TrainConfig & c)
{
  return c.lr0 * std::pow(c.decay_factor, static_cast<double>(epoch / c.decay_every));
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr const char * kCheckpointFormat = "mtraj-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Training summary of one epoch (means over its batches). Epochs count from 1.
struct EpochLog
{
  std::size_t epoch = 0;
  double lr = 0.0;
  double elbo = 0.0;
  double rec = 0.0;
  double wta = 0.0;
  double hier = 0.0;
  double total = 0.0;
};

struct Checkpoint
{
  TrainConfig config;
  ModelConfig model;
  std::vector<std::string> trained_domains;
  std::size_t epoch = 0;
  ParamStore params;
  AdamState optimizer;
  std::vector<EpochLog> log;
};

namespace detail
{
inline nlohmann::json arrays_to_json(const ParamStore & names, const std::vector<Array> & arrays)
{
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    out.push_back({{"name", names.name(i)}, {"shape", arrays[i].shape()}, {"values", arrays[i].values()}});
  }
  return out;
}

inline std::vector<std::pair<std::string, Array>> arrays_from_json(const nlohmann::json & j)
{
  std::vector<std::pair<std::string, Array>> out;
  for (const auto & e : j) {
    out.emplace_back(
      e.at("name").get<std::string>(),
      Array(e.at("shape").get<std::vector<std::size_t>>(), e.at("values").get<std::vector<double>>()));
  }
  return out;
}
}  // namespace detail

inline nlohmann::json to_json(const EpochLog & e)
{
  return {{"epoch", e.epoch}, {"lr", e.lr}, {"elbo", e.elbo}, {"rec", e.rec},
          {"wta", e.wta}, {"hier", e.hier}, {"total", e.total}};
}

inline nlohmann::json to_json(const Checkpoint & c)
{
  nlohmann::json log = nlohmann::json::array();
  for (const auto & e : c.log) {
    log.push_back(to_json(e));
  }
  return {
    {"format", kCheckpointFormat},
    {"version", kCheckpointVersion},
    {"train_config", to_json(c.config)},
    {"model_config", to_json(c.model)},
    {"trained_domains", c.trained_domains},
    {"epoch", c.epoch},
    {"params", detail::arrays_to_json(c.params, [&] {
       std::vector<Array> v;
       for (std::size_t i = 0; i < c.params.size(); ++i) {
         v.push_back(c.params.value(i));
       }
       return v;
     }())},
    {"optimizer",
     {{"step", c.optimizer.step},
      {"skipped", c.optimizer.skipped},
      {"m", detail::arrays_to_json(c.params, c.optimizer.m)},
      {"v", detail::arrays_to_json(c.params, c.optimizer.v)}}},
    {"log", log},
  };
}

inline Checkpoint checkpoint_from_json(const nlohmann::json & j)
{
  if (!j.is_object() || j.value("format", std::string()) != kCheckpointFormat) {
    throw ParseError("checkpoint: missing or unknown format tag");
  }
  const int version = j.at("version").get<int>();
  if (version != kCheckpointVersion) {
    throw ParseError(
      "checkpoint: version " + std::to_string(version) + " is not supported (expected " +
      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  c.config = train_config_from_json(j.at("train_config"));
  c.model = model_config_from_json(j.at("model_config"));
  c.trained_domains = j.at("trained_domains").get<std::vector<std::string>>();
  c.epoch = j.at("epoch").get<std::size_t>();
  for (auto & [name, value] : detail::arrays_from_json(j.at("params"))) {
    c.params.add(name, std::move(value));
  }
  const auto & opt = j.at("optimizer");
  c.optimizer.step = opt.at("step").get<std::size_t>();
  c.optimizer.skipped = opt.at("skipped").get<std::size_t>();
  for (auto & [name, value] : detail::arrays_from_json(opt.at("m"))) {
    c.optimizer.m.push_back(std::move(value));
  }
  for (auto & [name, value] : detail::arrays_from_json(opt.at("v"))) {
    c.optimizer.v.push_back(std::move(value));
  }
  if (c.optimizer.m.size() != c.params.size() || c.optimizer.v.size() != c.params.size()) {
    throw ParseError("checkpoint: optimizer state does not match parameters");
  }
  for (const auto & e : j.at("log")) {
    c.log.push_back({e.at("epoch").get<std::size_t>(), e.at("lr").get<double>(),
                     e.at("elbo").get<double>(), e.at("rec").get<double>(),
                     e.at("wta").get<double>(), e.at("hier").get<double>(),
                     e.at("total").get<double>()});
  }
  return c;
}

inline void checkpoint_save(const Checkpoint & c, const std::string & path)
{
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint " + path);
  }
  out << to_json(c).dump() << '\n';
  if (!out) {
    throw std::runtime_error("failed writing checkpoint " + path);
  }
}

inline Checkpoint checkpoint_load(const std::string & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception & e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

/// Copies checkpoint values into `target`, which fixes the architecture.
inline void load_params_into(ParamStore & target, const ParamStore & source)
{
  for (std::size_t i = 0; i < target.size(); ++i) {
    const std::string & name = target.name(i);
    if (!source.contains(name)) {
      throw DimensionError("checkpoint: parameter " + name + " is missing");
    }
    const Array & v = source.at(name);
    if (v.shape() != target.value(i).shape()) {
      throw DimensionError(
        "checkpoint: parameter " + name + " has shape " + v.shape_string() + " but the model expects " +
        target.value(i).shape_string());
    }
    target.value(i) = v;
  }
  if (source.size() != target.size()) {
    for (const auto & name : source.names()) {
      if (!target.contains(name)) {
        throw DimensionError("checkpoint: unexpected parameter " + name);
      }
    }
  }
}

inline void write_log_csv(const std::vector<EpochLog> & log, std::ostream & out)
{
  out << "epoch,lr,elbo,rec,wta,hier,total\n";
  for (const auto & e : log) {
    out << e.epoch << ',' << format_double(e.lr) << ',' << format_double(e.elbo) << ','
        << format_double(e.rec) << ',' << format_double(e.wta) << ',' << format_double(e.hier) << ','
        << format_double(e.total) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Fit
// ---------------------------------------------------------------------------

/// Model configuration for a dataset: the domain vocabulary gains any unseen
/// domains, T comes from the data, and the domain head exists only when the
/// data spans at least two domains.
inline ModelConfig resolve_model_config(const TrainConfig & c, const Dataset & ds)
{
  ModelConfig m = c.model;
  if (ds.empty()) {
    throw ValidationError("fit: empty dataset");
  }
  m.steps = ds.sequences.front().steps;
  const auto present = ds.domains();
  for (const auto & d : present) {
    if (std::find(m.domains.begin(), m.domains.end(), d) == m.domains.end()) {
      m.domains.push_back(d);
    }
  }
  m.domain_head = present.size() >= 2;
  return m;
}

/// Applies the configured training mask to a copy of `s`.
inline SceneSequence with_train_mask(
  const SceneSequence & s, const TrainConfig & c, std::size_t epoch, std::size_t index)
{
  MaskSpec spec;
  spec.pattern = c.train_mask;
  spec.missing_ratio = c.train_missing_ratio;
  spec.horizon = c.train_horizon == 0 ? s.steps / 2 : c.train_horizon;
  spec.prefix_ratio = c.train_prefix_ratio;
  spec.seed = derive_seed(c.seed, {0x747261696eULL, epoch, index});
  SceneSequence out = s;
  out.mask = make_mask(spec, s.agents, s.steps);
  return out;
}

struct FitOptions
{
  /// Directory for train_log.csv and checkpoint.json; empty = keep in memory only.
  std::string out_dir;
  /// Continue from this state instead of initializing.
  std::optional<Checkpoint> resume;
  /// Print one line per epoch.
  bool verbose = false;
};

struct FitResult
{
  Checkpoint state;
  bool diverged = false;
};

namespace detail
{
/// Parameters that may legitimately miss the graph of a batch: heads whose
/// contrastive term had nothing to contrast.
inline bool excusable_orphan(const std::string & name, const HierarchicalLoss & hier)
{
  if (name.rfind("proj.role.", 0) == 0) {
    return !hier.role_active;
  }
  if (name.rfind("proj.domain.", 0) == 0) {
    return !hier.domain_active;
  }
  return false;
}

inline void write_outputs(const FitOptions & opt, const Checkpoint & state, bool checkpoint)
{
  if (opt.out_dir.empty()) {
    return;
  }
  std::filesystem::create_directories(opt.out_dir);
  const std::string log_path = opt.out_dir + "/train_log.csv";
  std::ofstream log(log_path);
  if (!log) {
    throw std::runtime_error("cannot write " + log_path);
  }
  write_log_csv(state.log, log);
  if (checkpoint) {
    checkpoint_save(state, opt.out_dir + "/checkpoint.json");
  }
}
}  // namespace detail

/// Trains on `ds`. Every updated parameter must be reachable from the loss of
/// the batch that updates it; anything else is reported as an orphan.
inline FitResult fit(const Dataset & ds, const TrainConfig & config, const FitOptions & opt = {})
{
  config.validate();
  if (ds.empty()) {
    throw ValidationError("fit: empty dataset");
  }
  FitResult result;
  Checkpoint & st = result.state;
  if (opt.resume) {
    st = *opt.resume;
    st.config.epochs = config.epochs;
    if (nlohmann::json(to_json(st.config)) != nlohmann::json(to_json(config))) {
      throw ConfigError("fit: resume checkpoint was produced with a different configuration");
    }
  } else {
    st.config = config;
    st.model = resolve_model_config(config, ds);
    st.trained_domains = ds.domains();
    st.params = init_model(st.model, derive_seed(config.seed, {0x696e6974ULL}));
    st.optimizer = make_adam(st.params);
  }
  for (const auto & s : ds.sequences) {
    if (s.steps != st.model.steps) {
      throw ValidationError("fit: all sequences must share T");
    }
  }

  std::vector<std::size_t> order(ds.size());
  for (std::size_t epoch = st.epoch; epoch < config.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, config);
    const double kl_scale = config.kl_warmup_epochs == 0
      ? 1.0
      : std::min(1.0, static_cast<double>(epoch + 1) / static_cast<double>(config.kl_warmup_epochs));
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(config.seed, {0x73687566ULL, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    const ParamStore params_at_start = st.params;
    const AdamState opt_at_start = st.optimizer;
    EpochLog row;
    row.epoch = epoch + 1;
    row.lr = lr;
    std::size_t batches = 0;
    try {
      for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
        const std::size_t end = std::min(order.size(), begin + config.batch_size);
        std::vector<SceneSequence> masked;
        masked.reserve(end - begin);
        for (std::size_t k = begin; k < end; ++k) {
          masked.push_back(with_train_mask(ds.sequences[order[k]], config, epoch, order[k]));
        }
        std::vector<const SceneSequence *> ptrs;
        for (const auto & m : masked) {
          ptrs.push_back(&m);
        }
        const Batch b = make_batch(ptrs, st.model);

        Tape tape;
        Binding p(tape, st.params);
        ForwardResult fr = forward_loss(
          p, st.model, b, config.weights, config.k_train,
          derive_seed(config.seed, {0x6e6f6973ULL, epoch, batches}), kl_scale);
        if (!std::isfinite(fr.losses.total)) {
          throw NumericError("non-finite total loss");
        }
        tape.backward(fr.losses.total_var);
        const std::vector<bool> reached = p.reached();
        for (std::size_t i = 0; i < reached.size(); ++i) {
          if (!reached[i] && !detail::excusable_orphan(st.params.name(i), fr.hier)) {
            throw UsageError("fit: parameter " + st.params.name(i) + " is not reachable from the loss");
          }
        }
        adam_step(st.params, p.gradients(), st.optimizer, lr, reached);
        row.elbo += fr.losses.elbo;
        row.rec += fr.losses.rec;
        row.wta += fr.losses.wta;
        row.hier += fr.losses.hier;
        row.total += fr.losses.total;
        ++batches;
      }
    } catch (const NumericError & e) {
      logging::warn(
        "fit: divergence in epoch " + std::to_string(epoch + 1) + " (" + e.what() +
        "); keeping the last good state");
      st.params = params_at_start;
      st.optimizer = opt_at_start;
      result.diverged = true;
      detail::write_outputs(opt, st, true);
      return result;
    }
    const double n = static_cast<double>(batches);
    row.elbo /= n;
    row.rec /= n;
    row.wta /= n;
    row.hier /= n;
    row.total /= n;
    st.log.push_back(row);
    st.epoch = epoch + 1;
    if (opt.verbose) {
      logging::info(
        "epoch " + std::to_string(row.epoch) + " lr " + format_double(row.lr) + " total " +
        format_double(row.total));
    }
    const bool last = st.epoch == config.epochs;
    const bool periodic = config.checkpoint_every > 0 && st.epoch % config.checkpoint_every == 0;
    detail::write_outputs(opt, st, last || periodic);
  }
  return result;
}

}  // namespace mtraj

#endif  // MTRAJ__TRAIN_HPP_
