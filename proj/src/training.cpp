#include "protfuse/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace protfuse {

std::string to_string(Stage s) {
  switch (s) {
    case Stage::decoder_pretrain: return "decoder_pretrain";
    case Stage::projection_tuning: return "projection_tuning";
    case Stage::supervised_finetune: return "supervised_finetune";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  if (name == "decoder_pretrain") return Stage::decoder_pretrain;
  if (name == "projection_tuning" || name == "stage1") return Stage::projection_tuning;
  if (name == "supervised_finetune" || name == "stage2") return Stage::supervised_finetune;
  throw ConfigError("unknown training stage '" + name + "'");
}

PartitionSet stage_partitions(Stage s) {
  switch (s) {
    case Stage::decoder_pretrain: return {Partition::decoder, Partition::embed_table};
    case Stage::projection_tuning: return {Partition::proj_struct, Partition::proj_seq};
    case Stage::supervised_finetune:
      return {Partition::proj_struct, Partition::proj_seq, Partition::struct_encoder, Partition::seq_encoder};
  }
  return {};
}

std::uint64_t StagePlan::total_steps(std::size_t corpus_size) const {
  if (unit == DurationUnit::steps) return static_cast<std::uint64_t>(duration);
  const std::uint64_t examples = static_cast<std::uint64_t>(corpus_size) * static_cast<std::uint64_t>(duration);
  return (examples + static_cast<std::uint64_t>(batch_size) - 1) / static_cast<std::uint64_t>(batch_size);
}

namespace {

double parse_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid value '" + value + "' for stage override '" + key + "'");
  }
}

int parse_positive_int(const std::string& key, const std::string& value) {
  const double v = parse_number(key, value);
  if (v < 1 || v != std::floor(v)) throw ConfigError("stage override '" + key + "' must be a positive integer");
  return static_cast<int>(v);
}

}  // namespace

StagePlan make_stage_plan(Stage stage, const std::map<std::string, std::string>& overrides) {
  StagePlan plan;
  plan.stage = stage;
  plan.trainable = stage_partitions(stage);
  switch (stage) {
    case Stage::projection_tuning:
      plan.lr = 2e-4;
      plan.batch_size = 64;
      plan.unit = DurationUnit::epochs;
      plan.duration = 2;
      break;
    case Stage::supervised_finetune:
      plan.lr = 2e-5;
      plan.batch_size = 32;
      plan.unit = DurationUnit::steps;
      plan.duration = 25000;
      break;
    case Stage::decoder_pretrain:
      plan.lr = 1e-3;
      plan.batch_size = 16;
      plan.unit = DurationUnit::steps;
      plan.duration = 500;
      break;
  }

  if (auto it = overrides.find("preset"); it != overrides.end()) {
    if (it->second != "desk") throw ConfigError("unknown stage preset '" + it->second + "'");
    plan.unit = DurationUnit::steps;
    plan.duration = 300;
    plan.batch_size = 8;
  }
  for (const auto& [key, value] : overrides) {
    if (key == "preset") continue;
    if (key == "lr") {
      plan.lr = parse_number(key, value);
      if (plan.lr < 0) throw ConfigError("stage lr must be non-negative");
    } else if (key == "batch_size") {
      plan.batch_size = parse_positive_int(key, value);
    } else if (key == "steps") {
      plan.unit = DurationUnit::steps;
      plan.duration = parse_positive_int(key, value);
    } else if (key == "epochs") {
      plan.unit = DurationUnit::epochs;
      plan.duration = parse_positive_int(key, value);
    } else if (key == "weight_decay") {
      plan.weight_decay = parse_number(key, value);
      if (plan.weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
    } else if (key == "clip_norm") {
      plan.clip_norm = parse_number(key, value);
      if (plan.clip_norm <= 0) throw ConfigError("clip_norm must be positive");
    } else if (key == "schedule") {
      if (value != "cosine") throw ConfigError("only the cosine schedule is supported");
    } else {
      throw ConfigError("unknown stage override '" + key + "'");
    }
  }
  if (overrides.count("steps") != 0 && overrides.count("epochs") != 0) {
    throw ConfigError("stage overrides may set steps or epochs, not both");
  }
  return plan;
}

double cosine_lr(double base, std::uint64_t step, std::uint64_t total) {
  if (total == 0) return base;
  const double progress = static_cast<double>(std::min(step, total)) / static_cast<double>(total);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename Scalar>
TrainState<Scalar> make_train_state(ModelParams<Scalar> params, std::uint64_t seed) {
  TrainState<Scalar> state;
  state.adam_m = params.zeros_like();
  state.adam_v = params.zeros_like();
  state.params = std::move(params);
  state.seed = seed;
  return state;
}

std::vector<std::size_t> batch_indices(std::size_t corpus_size, std::size_t batch_size, std::uint64_t seed,
                                       std::uint64_t step) {
  if (corpus_size == 0) throw std::invalid_argument("batch_indices: empty corpus");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> order(corpus_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::uint64_t global = step * batch_size + b;
    const std::uint64_t epoch = global / corpus_size;
    if (epoch != cached_epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 rng(derive_seed(seed, "epoch" + std::to_string(epoch)));
      std::shuffle(order.begin(), order.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(order[global % corpus_size]);
  }
  return out;
}

template <typename Scalar>
double apply_adamw(const StagePlan& plan, double lr, const ModelParams<Scalar>& grads, TrainState<Scalar>& state) {
  double sq = 0;
  for (Partition p : plan.trainable) {
    for (const auto& e : grads[p].entries()) sq += static_cast<double>(e.value.squaredNorm());
  }
  const double norm = std::sqrt(sq);
  const double clip = norm > plan.clip_norm ? plan.clip_norm / norm : 1.0;
  const double t = static_cast<double>(state.step + 1);
  const double correct1 = 1.0 - std::pow(plan.beta1, t);
  const double correct2 = 1.0 - std::pow(plan.beta2, t);
  const auto b1 = static_cast<Scalar>(plan.beta1), b2 = static_cast<Scalar>(plan.beta2);
  for (Partition p : plan.trainable) {
    auto& params = state.params[p].entries();
    auto& m = state.adam_m[p].entries();
    auto& v = state.adam_v[p].entries();
    const auto& g = grads[p].entries();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Matrix<Scalar> gi = g[i].value * static_cast<Scalar>(clip);
      m[i].value = b1 * m[i].value + (Scalar(1) - b1) * gi;
      v[i].value = b2 * v[i].value + (Scalar(1) - b2) * gi.cwiseProduct(gi);
      if (lr == 0.0) continue;
      const bool decay = params[i].name.size() >= 7 && params[i].name.ends_with(".weight");
      auto& w = params[i].value;
      const auto mhat = (m[i].value.array() / static_cast<Scalar>(correct1));
      const auto vhat = (v[i].value.array() / static_cast<Scalar>(correct2));
      const auto update = mhat / (vhat.sqrt() + static_cast<Scalar>(plan.epsilon));
      if (decay) w.array() -= static_cast<Scalar>(lr * plan.weight_decay) * w.array();
      w.array() -= static_cast<Scalar>(lr) * update;
    }
  }
  return norm;
}

template <typename Scalar>
void train_stage(const StagePlan& plan, const ModelConfig& cfg, const std::vector<PreparedExample>& corpus,
                 TrainState<Scalar>& state, const StepCallback& on_step, std::uint64_t max_steps) {
  if (corpus.empty()) throw std::invalid_argument("train_stage: empty corpus");
  if (plan.schedule != "cosine") throw ConfigError("only the cosine schedule is supported");
  const std::string stage_name = to_string(plan.stage);
  if (state.stage != stage_name) {
    state.adam_m = state.params.zeros_like();
    state.adam_v = state.params.zeros_like();
    state.step = 0;
    state.stage = stage_name;
  }
  const std::uint64_t total = plan.total_steps(corpus.size());
  const std::uint64_t stage_seed = derive_seed(state.seed, stage_name);
  std::uint64_t done = 0;
  while (state.step < total && (max_steps == 0 || done < max_steps)) {
    const auto batch = batch_indices(corpus.size(), static_cast<std::size_t>(plan.batch_size), stage_seed, state.step);
    ModelParams<Scalar> grads = state.params.zeros_like();
    const Scalar scale = Scalar(1) / static_cast<Scalar>(batch.size());
    double batch_loss = 0;
    for (std::size_t index : batch) {
      const PreparedExample& ex = corpus[index];
      const Scalar loss = plan.stage == Stage::decoder_pretrain
                              ? text_lm_loss(cfg, state.params, ex, &grads, plan.trainable, scale)
                              : example_loss(cfg, state.params, ex, &grads, plan.trainable, scale);
      if (!std::isfinite(static_cast<double>(loss))) {
        std::ostringstream msg;
        msg << "non-finite loss in stage " << stage_name << " at step " << state.step << " (example '" << ex.id
            << "', batch indices";
        for (std::size_t i : batch) msg << ' ' << i;
        msg << ")";
        throw TrainingError(msg.str());
      }
      batch_loss += static_cast<double>(loss);
    }
    batch_loss /= static_cast<double>(batch.size());
    const double lr = cosine_lr(plan.lr, state.step, total);
    const double norm = apply_adamw(plan, lr, grads, state);
    ++state.step;
    ++done;
    state.loss_history.push_back(batch_loss);
    if (!state.params.all_finite()) {
      throw TrainingError("non-finite parameters after step " + std::to_string(state.step) + " of " + stage_name);
    }
    if (on_step) on_step(StepRecord{plan.stage, state.step, batch_loss, lr, norm});
  }
}

template <typename Scalar>
std::vector<double> pretrain_sequence_encoder(const ModelConfig& cfg, const std::vector<ResidueTokenIds>& sequences,
                                              TrainState<Scalar>& state, int steps, int batch_size, double lr,
                                              double mask_rate) {
  if (sequences.empty()) throw std::invalid_argument("pretrain_sequence_encoder: no sequences");
  StagePlan plan;
  plan.stage = Stage::supervised_finetune;
  plan.trainable = {Partition::seq_encoder};
  plan.lr = lr;
  plan.batch_size = batch_size;
  plan.duration = steps;
  state.adam_m = state.params.zeros_like();
  state.adam_v = state.params.zeros_like();
  state.step = 0;
  state.stage = "mlm_pretrain";
  std::mt19937_64 rng(derive_seed(state.seed, "mlm"));
  std::vector<double> history;
  for (int s = 0; s < steps; ++s) {
    const auto idx = batch_indices(sequences.size(), static_cast<std::size_t>(batch_size), state.seed,
                                   static_cast<std::uint64_t>(s));
    std::vector<ResidueTokenIds> batch;
    for (std::size_t i : idx) batch.push_back(sequences[i]);
    ModelParams<Scalar> grads = state.params.zeros_like();
    const Scalar loss = mlm_step(batch, mask_rate, cfg.sequence, state.params[Partition::seq_encoder], rng,
                                 &grads[Partition::seq_encoder]);
    apply_adamw(plan, cosine_lr(lr, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(steps)), grads, state);
    ++state.step;
    history.push_back(static_cast<double>(loss));
  }
  state.adam_m = state.params.zeros_like();
  state.adam_v = state.params.zeros_like();
  state.step = 0;
  state.stage.clear();
  return history;
}

std::vector<double> smooth(const std::vector<double>& values, std::size_t window) {
  if (window == 0) throw std::invalid_argument("smooth: window must be positive");
  std::vector<double> out;
  out.reserve(values.size());
  double acc = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= window) acc -= values[i - window];
    out.push_back(acc / static_cast<double>(std::min(i + 1, window)));
  }
  return out;
}

#define PROTFUSE_INSTANTIATE(S)                                                                                   \
  template TrainState<S> make_train_state<S>(ModelParams<S>, std::uint64_t);                                     \
  template double apply_adamw<S>(const StagePlan&, double, const ModelParams<S>&, TrainState<S>&);               \
  template void train_stage<S>(const StagePlan&, const ModelConfig&, const std::vector<PreparedExample>&,        \
                               TrainState<S>&, const StepCallback&, std::uint64_t);                              \
  template std::vector<double> pretrain_sequence_encoder<S>(const ModelConfig&, const std::vector<ResidueTokenIds>&, \
                                                            TrainState<S>&, int, int, double, double);
PROTFUSE_INSTANTIATE(float)
PROTFUSE_INSTANTIATE(double)
#undef PROTFUSE_INSTANTIATE

}  // namespace protfuse
