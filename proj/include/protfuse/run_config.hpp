#pragma once

#include "protfuse/model.hpp"
#include "protfuse/pipeline.hpp"
#include "protfuse/training.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace protfuse {

using ConfigMap = std::map<std::string, std::string>;

/// "key = value" lines with dotted keys; '#' starts a comment. Throws
/// ConfigError with the line number on malformed lines or duplicate keys.
ConfigMap parse_config_text(std::string_view text);

/// Applies "key=value" overrides (as given to --set).
void apply_overrides(ConfigMap& map, const std::vector<std::string>& assignments);

enum class Recipe { stage2_only, stage1_stage2, stage1_only };

std::string to_string(Recipe r);
Recipe parse_recipe(const std::string& name);

struct DecoderPretrainConfig {
  int steps = 1500;
  int batch_size = 8;
  double lr = 2e-3;
  std::uint64_t seed = 0;
};

struct MlmConfig {
  int steps = 0;
  int batch_size = 8;
  double lr = 1e-3;
  double mask_rate = 0.15;
};

struct RunConfig {
  ModelConfig model;
  DataInputs inputs;
  std::uint64_t data_seed = 1;
  Recipe recipe = Recipe::stage2_only;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  DecoderPretrainConfig decoder_pretrain;
  MlmConfig mlm;
  std::map<std::string, std::string> stage1_overrides;
  std::map<std::string, std::string> stage2_overrides;
  int eval_max_new_tokens = 96;
  std::size_t eval_max_examples = 0;  // 0: whole split
  std::string eval_split = "test";
  std::vector<std::string> ablate_rows = {"full", "no_structure", "no_sequence", "no_fusion", "stage1_stage2"};
  /// Seeds for the ablation grid; empty means train.seeds.
  std::vector<std::uint64_t> ablate_seeds;
  std::string output_dir = "runs/default";
  /// Built datasets; empty means <output_dir>/data.
  std::string dataset_dir;

  StagePlan stage1_plan() const;
  StagePlan stage2_plan() const;
  std::string data_dir() const { return dataset_dir.empty() ? output_dir + "/data" : dataset_dir; }
};

/// Builds a RunConfig from parsed keys. Relative paths are resolved against
/// `base_dir`. Unknown keys and invalid values raise ConfigError.
RunConfig make_run_config(const ConfigMap& map, const std::string& base_dir = ".");

/// Reads the file, applies the overrides and builds the config.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Every recognised key with a one-line description, for --help output.
const std::vector<std::pair<std::string, std::string>>& config_keys();

}  // namespace protfuse
