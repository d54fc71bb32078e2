#pragma once

#include "protfuse/checkpoint.hpp"
#include "protfuse/evaluation.hpp"
#include "protfuse/fixtures.hpp"
#include "protfuse/pipeline.hpp"
#include "protfuse/run_config.hpp"

#include <exception>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace protfuse {

/// Process exit codes of the CLI.
namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kConfig = 2;
inline constexpr int kData = 3;
inline constexpr int kRuntime = 4;
}  // namespace exit_code

/// Maps an exception to its exit code: ConfigError 2, DataError (and
/// CheckpointError) 3, anything else 4.
int exit_code_for(const std::exception& e);

void cmd_fixtures(const FixtureConfig& cfg, const std::string& out_dir, std::ostream& out);

/// Writes projection.jsonl and finetune_{train,valid,test}.jsonl into
/// cfg.data_dir() and prints per-task counts.
BuiltData cmd_build_data(const RunConfig& cfg, std::ostream& out);

struct SeedRun {
  std::uint64_t seed = 0;
  std::string init_checkpoint;
  std::string model_checkpoint;
  std::string metrics_log;
  std::vector<double> stage2_losses;
  std::vector<double> stage1_losses;
};

/// Runs the shared decoder pretraining (cached under output_dir), then the
/// configured recipe for every seed. Each seed gets seed<N>/init.ckpt,
/// seed<N>/model.ckpt and seed<N>/metrics.jsonl.
std::vector<SeedRun> cmd_train(const RunConfig& cfg, std::ostream& out);

struct Prediction {
  std::string id;
  TaskTag task;
  std::string reference;
  std::string prediction;
  std::size_t protein_tokens = 0;
  std::size_t generated_tokens = 0;
};

struct SeedEvaluation {
  std::uint64_t seed = 0;
  std::vector<Prediction> predictions;
  /// (task, metric) -> score.
  std::map<std::pair<std::string, std::string>, double> scores;
  std::map<std::string, std::size_t> examples_per_task;
};

/// Greedy generation over `examples` and per-task scoring: accuracy for
/// classification tasks, ROUGE-L (and critical-part ROUGE-L where rules exist)
/// for understanding tasks.
SeedEvaluation evaluate_model(const ModelConfig& model, const ModelParams<float>& params, const Corpus& corpus,
                              int max_new_tokens, std::uint64_t seed);

/// Evaluates every seed's model.ckpt on cfg.eval_split and aggregates over
/// exactly three seeds. Writes eval/report.jsonl, eval/summary.txt and
/// eval/predictions_seed<N>.jsonl.
std::vector<EvalReport> cmd_eval(const RunConfig& cfg, std::ostream& out);

/// Greedy answer for one question about proteins from the structure store.
std::string cmd_generate(const RunConfig& cfg, const std::string& checkpoint, const std::string& question,
                         const std::vector<std::string>& protein_ids, std::ostream& out);

struct AblationRow {
  std::string name;
  std::string fusion;
  std::string recipe;
  double protein_tokens_per_example = 0;
  std::size_t protein_tokens_total = 0;
  double mean_rouge_l = 0;
  double mean_accuracy = 0;
  double final_loss = 0;
  std::vector<std::size_t> protein_tokens;  // per evaluated example
  std::vector<std::size_t> generated_tokens;
};

/// Trains and evaluates each configured row under output_dir/ablate/<row>,
/// sharing datasets and seeds, and writes ablate/table.txt, ablate/table.jsonl
/// and ablate/tokens.tsv.
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, std::ostream& out);

/// Applies one ablation row to a copy of `base`.
RunConfig ablation_config(const RunConfig& base, const std::string& row);

}  // namespace protfuse
