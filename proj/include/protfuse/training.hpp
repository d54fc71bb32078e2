#pragma once

#include "protfuse/model.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace protfuse {

/// decoder_pretrain is the desk-scale stand-in for starting from a pretrained
/// language model: a text-only causal LM pass over {decoder, embed_table}.
enum class Stage { decoder_pretrain, projection_tuning, supervised_finetune };

std::string to_string(Stage s);
Stage parse_stage(const std::string& name);

enum class DurationUnit { epochs, steps };

struct StagePlan {
  Stage stage = Stage::supervised_finetune;
  PartitionSet trainable;
  double lr = 2e-5;
  std::string schedule = "cosine";
  std::string optimizer = "adamw";
  int batch_size = 32;
  DurationUnit unit = DurationUnit::steps;
  int duration = 25000;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Optimizer steps needed to cover `duration` over a corpus of `corpus_size`.
  std::uint64_t total_steps(std::size_t corpus_size) const;
};

/// Default trainable partitions per stage.
PartitionSet stage_partitions(Stage s);

/// Full-scale defaults, then `overrides`. Recognised keys: preset (only
/// "desk"), lr, batch_size, steps, epochs, weight_decay, clip_norm, schedule.
/// Throws ConfigError on unknown keys or invalid values.
StagePlan make_stage_plan(Stage stage, const std::map<std::string, std::string>& overrides = {});

/// Learning rate at `step` of `total` under cosine decay from `base` to 0.
double cosine_lr(double base, std::uint64_t step, std::uint64_t total);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct TrainState {
  ModelParams<Scalar> params;
  ModelParams<Scalar> adam_m;
  ModelParams<Scalar> adam_v;
  /// Stage the optimizer moments and `step` belong to; empty before any stage.
  std::string stage;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;
};

template <typename Scalar>
TrainState<Scalar> make_train_state(ModelParams<Scalar> params, std::uint64_t seed);

struct StepRecord {
  Stage stage;
  std::uint64_t step;
  double loss;
  double lr;
  double grad_norm;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Example indices of the batch consumed at `step`: the corpus is reshuffled
/// every epoch from (seed, epoch), and batches are contiguous slices of the
/// concatenated epoch stream, so a resumed run sees the same batches.
std::vector<std::size_t> batch_indices(std::size_t corpus_size, std::size_t batch_size, std::uint64_t seed,
                                       std::uint64_t step);

/// Runs the plan from state.step to its end. Entering a stage different from
/// state.stage resets the optimizer moments and the step counter. Only the
/// plan's trainable partitions are updated; the rest stay bit-identical.
/// `max_steps` (if non-zero) stops early after that many steps of this call.
template <typename Scalar>
void train_stage(const StagePlan& plan, const ModelConfig& cfg, const std::vector<PreparedExample>& corpus,
                 TrainState<Scalar>& state, const StepCallback& on_step = {}, std::uint64_t max_steps = 0);

/// Applies one AdamW update with global-norm clipping to the trainable
/// partitions; returns the pre-clip gradient norm.
template <typename Scalar>
double apply_adamw(const StagePlan& plan, double lr, const ModelParams<Scalar>& grads, TrainState<Scalar>& state);

/// Masked-language-model pretraining of the sequence encoder.
template <typename Scalar>
std::vector<double> pretrain_sequence_encoder(const ModelConfig& cfg, const std::vector<ResidueTokenIds>& sequences,
                                              TrainState<Scalar>& state, int steps, int batch_size, double lr,
                                              double mask_rate);

/// Moving average over `window` entries, used for loss smoothing.
std::vector<double> smooth(const std::vector<double>& values, std::size_t window);

}  // namespace protfuse
