#include "protfuse/run_config.hpp"

#include "protfuse/text_io.hpp"

#include <cmath>
#include <filesystem>
#include <functional>

namespace protfuse {

namespace fs = std::filesystem;

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  int line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

void apply_overrides(ConfigMap& map, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const std::size_t eq = a.find('=');
    if (eq == std::string::npos || trim(std::string_view(a).substr(0, eq)).empty()) {
      throw ConfigError("override '" + a + "' must look like key=value");
    }
    map[std::string(trim(std::string_view(a).substr(0, eq)))] = std::string(trim(std::string_view(a).substr(eq + 1)));
  }
}

std::string to_string(Recipe r) {
  switch (r) {
    case Recipe::stage2_only: return "stage2_only";
    case Recipe::stage1_stage2: return "stage1_stage2";
    case Recipe::stage1_only: return "stage1_only";
  }
  return "?";
}

Recipe parse_recipe(const std::string& name) {
  if (name == "stage2_only") return Recipe::stage2_only;
  if (name == "stage1_stage2") return Recipe::stage1_stage2;
  if (name == "stage1_only") return Recipe::stage1_only;
  throw ConfigError("unknown recipe '" + name + "' (expected stage2_only, stage1_stage2 or stage1_only)");
}

StagePlan RunConfig::stage1_plan() const { return make_stage_plan(Stage::projection_tuning, stage1_overrides); }
StagePlan RunConfig::stage2_plan() const { return make_stage_plan(Stage::supervised_finetune, stage2_overrides); }

namespace {

const std::vector<std::string> kStageKeys = {"preset", "lr", "batch_size", "steps", "epochs",
                                             "weight_decay", "clip_norm", "schedule"};

long long to_integer(const std::string& key, const std::string& value, long long min) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    if (v < min) throw ConfigError(key + " must be >= " + std::to_string(min));
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("invalid integer '" + value + "' for " + key);
  }
}

double to_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid number '" + value + "' for " + key);
  }
}

std::vector<std::string> list_of(const std::string& value) {
  std::vector<std::string> out;
  for (const auto& item : split(value, ',')) {
    const std::string_view t = trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"model.structure.d_struct", "structure encoder width"},
      {"model.structure.num_layers", "message-passing rounds"},
      {"model.structure.variant", "mpnn_style | relational_style"},
      {"model.sequence.preset", "esm-xs | esm-s | esm-m (sets width, layers, heads)"},
      {"model.sequence.d_seq", "sequence encoder width"},
      {"model.sequence.num_layers", "sequence encoder blocks"},
      {"model.sequence.num_heads", "sequence encoder attention heads"},
      {"model.decoder.d_model", "decoder width (projector output width)"},
      {"model.decoder.num_layers", "decoder blocks"},
      {"model.decoder.num_heads", "decoder attention heads"},
      {"model.decoder.max_positions", "decoder context length"},
      {"model.graph.k", "neighbours per residue"},
      {"model.graph.rbf_count", "radial basis functions per edge (also the structure edge width)"},
      {"model.projector.hidden", "projector hidden width"},
      {"model.projector.depth", "projector linear layers"},
      {"model.fusion", "add | concat_tokens | seq_only | struct_only"},
      {"data.fixtures", "fixture directory; fills the four data.* paths below"},
      {"data.structures", "structure store directory"},
      {"data.annotations", "annotation TSV"},
      {"data.peer", "directory of PEER manifests <task>.tsv"},
      {"data.molinst", "directory of instruction records <task>.jsonl"},
      {"data.seed", "seed for template choice and 8:1:1 splits"},
      {"train.recipe", "stage2_only | stage1_stage2 | stage1_only"},
      {"train.seeds", "comma-separated seeds (three for the reporting protocol)"},
      {"train.decoder_pretrain.steps", "text-only decoder pretraining steps (0 disables)"},
      {"train.decoder_pretrain.batch_size", "decoder pretraining batch size"},
      {"train.decoder_pretrain.lr", "decoder pretraining learning rate"},
      {"train.decoder_pretrain.seed", "seed of the shared pretrained decoder"},
      {"train.mlm.steps", "masked-LM steps for the sequence encoder (0 disables)"},
      {"train.mlm.batch_size", "masked-LM batch size"},
      {"train.mlm.lr", "masked-LM learning rate"},
      {"train.mlm.mask_rate", "masked-LM mask rate"},
      {"train.stage1.<key>", "stage-1 overrides: preset, lr, batch_size, steps, epochs, weight_decay, clip_norm"},
      {"train.stage2.<key>", "stage-2 overrides, same keys"},
      {"eval.max_new_tokens", "generation budget per answer"},
      {"eval.max_examples", "evaluate at most this many test examples (0: all)"},
      {"eval.split", "train | validation | test"},
      {"ablate.rows", "comma-separated rows: full, no_structure, no_sequence, no_fusion, stage1_stage2"},
      {"ablate.seeds", "seeds for the ablation grid (default: train.seeds)"},
      {"output.data_dir", "where build-data writes and train/eval read datasets (default: <output.dir>/data)"},
      {"output.dir", "directory receiving datasets, checkpoints and reports"},
  };
  return keys;
}

RunConfig make_run_config(const ConfigMap& map, const std::string& base_dir) {
  RunConfig cfg;
  auto path = [&](const std::string& value) {
    const fs::path p(value);
    return (p.is_absolute() ? p : fs::path(base_dir) / p).lexically_normal().string();
  };
  // Presets first so explicit widths can refine them.
  if (auto it = map.find("model.sequence.preset"); it != map.end()) {
    try {
      cfg.model.sequence = SequenceEncoderConfig::preset(it->second);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (auto it = map.find("data.fixtures"); it != map.end()) cfg.inputs = fixture_inputs(path(it->second));

  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"model.structure.d_struct", [&](auto& k, auto& v) { cfg.model.structure.d_struct = int(to_integer(k, v, 1)); }},
      {"model.structure.num_layers", [&](auto& k, auto& v) { cfg.model.structure.num_layers = int(to_integer(k, v, 1)); }},
      {"model.structure.variant", [&](auto&, auto& v) { cfg.model.structure.variant = parse_structure_variant(v); }},
      {"model.sequence.preset", [](auto&, auto&) {}},
      {"model.sequence.d_seq", [&](auto& k, auto& v) { cfg.model.sequence.d_seq = int(to_integer(k, v, 1)); }},
      {"model.sequence.num_layers", [&](auto& k, auto& v) { cfg.model.sequence.num_layers = int(to_integer(k, v, 1)); }},
      {"model.sequence.num_heads", [&](auto& k, auto& v) { cfg.model.sequence.num_heads = int(to_integer(k, v, 1)); }},
      {"model.decoder.d_model", [&](auto& k, auto& v) { cfg.model.decoder.d_model = int(to_integer(k, v, 1)); }},
      {"model.decoder.num_layers", [&](auto& k, auto& v) { cfg.model.decoder.num_layers = int(to_integer(k, v, 1)); }},
      {"model.decoder.num_heads", [&](auto& k, auto& v) { cfg.model.decoder.num_heads = int(to_integer(k, v, 1)); }},
      {"model.decoder.max_positions", [&](auto& k, auto& v) { cfg.model.decoder.max_positions = int(to_integer(k, v, 1)); }},
      {"model.graph.k", [&](auto& k, auto& v) { cfg.model.graph.k = int(to_integer(k, v, 1)); }},
      {"model.graph.rbf_count",
       [&](auto& k, auto& v) {
         cfg.model.graph.rbf_count = int(to_integer(k, v, 1));
         cfg.model.structure.edge_width = cfg.model.graph.rbf_count;
       }},
      {"model.projector.hidden", [&](auto& k, auto& v) { cfg.model.projector_hidden = int(to_integer(k, v, 1)); }},
      {"model.projector.depth", [&](auto& k, auto& v) { cfg.model.projector_depth = int(to_integer(k, v, 1)); }},
      {"model.fusion",
       [&](auto&, auto& v) {
         try {
           cfg.model.fusion = parse_fusion_mode(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(e.what());
         }
       }},
      {"data.fixtures", [](auto&, auto&) {}},
      {"data.structures", [&](auto&, auto& v) { cfg.inputs.structures_dir = path(v); }},
      {"data.annotations", [&](auto&, auto& v) { cfg.inputs.annotations = path(v); }},
      {"data.peer", [&](auto&, auto& v) { cfg.inputs.peer_dir = path(v); }},
      {"data.molinst", [&](auto&, auto& v) { cfg.inputs.molinst_dir = path(v); }},
      {"data.seed", [&](auto& k, auto& v) { cfg.data_seed = std::uint64_t(to_integer(k, v, 0)); }},
      {"train.recipe", [&](auto&, auto& v) { cfg.recipe = parse_recipe(v); }},
      {"train.seeds",
       [&](auto& k, auto& v) {
         cfg.seeds.clear();
         for (const auto& s : list_of(v)) cfg.seeds.push_back(std::uint64_t(to_integer(k, s, 0)));
         if (cfg.seeds.empty()) throw ConfigError("train.seeds must list at least one seed");
       }},
      {"train.decoder_pretrain.steps", [&](auto& k, auto& v) { cfg.decoder_pretrain.steps = int(to_integer(k, v, 0)); }},
      {"train.decoder_pretrain.batch_size",
       [&](auto& k, auto& v) { cfg.decoder_pretrain.batch_size = int(to_integer(k, v, 1)); }},
      {"train.decoder_pretrain.lr", [&](auto& k, auto& v) { cfg.decoder_pretrain.lr = to_real(k, v); }},
      {"train.decoder_pretrain.seed",
       [&](auto& k, auto& v) { cfg.decoder_pretrain.seed = std::uint64_t(to_integer(k, v, 0)); }},
      {"train.mlm.steps", [&](auto& k, auto& v) { cfg.mlm.steps = int(to_integer(k, v, 0)); }},
      {"train.mlm.batch_size", [&](auto& k, auto& v) { cfg.mlm.batch_size = int(to_integer(k, v, 1)); }},
      {"train.mlm.lr", [&](auto& k, auto& v) { cfg.mlm.lr = to_real(k, v); }},
      {"train.mlm.mask_rate",
       [&](auto& k, auto& v) {
         cfg.mlm.mask_rate = to_real(k, v);
         if (cfg.mlm.mask_rate <= 0 || cfg.mlm.mask_rate >= 1) throw ConfigError("train.mlm.mask_rate must be in (0, 1)");
       }},
      {"eval.max_new_tokens", [&](auto& k, auto& v) { cfg.eval_max_new_tokens = int(to_integer(k, v, 1)); }},
      {"eval.max_examples", [&](auto& k, auto& v) { cfg.eval_max_examples = std::size_t(to_integer(k, v, 0)); }},
      {"eval.split",
       [&](auto&, auto& v) {
         if (v != "train" && v != "validation" && v != "test") throw ConfigError("eval.split must be train, validation or test");
         cfg.eval_split = v;
       }},
      {"ablate.rows", [&](auto&, auto& v) { cfg.ablate_rows = list_of(v); }},
      {"ablate.seeds",
       [&](auto& k, auto& v) {
         cfg.ablate_seeds.clear();
         for (const auto& s : list_of(v)) cfg.ablate_seeds.push_back(std::uint64_t(to_integer(k, s, 0)));
       }},
      {"output.data_dir", [&](auto&, auto& v) { cfg.dataset_dir = path(v); }},
      {"output.dir", [&](auto&, auto& v) { cfg.output_dir = path(v); }},
  };

  for (const auto& [key, value] : map) {
    if (key.starts_with("train.stage1.") || key.starts_with("train.stage2.")) {
      const std::string sub = key.substr(13);
      if (std::find(kStageKeys.begin(), kStageKeys.end(), sub) == kStageKeys.end()) {
        throw ConfigError("unknown stage key '" + key + "'");
      }
      (key[11] == '1' ? cfg.stage1_overrides : cfg.stage2_overrides)[sub] = value;
      continue;
    }
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  for (const auto& row : cfg.ablate_rows) {
    if (row != "full" && row != "no_structure" && row != "no_sequence" && row != "no_fusion" &&
        row != "stage1_stage2") {
      throw ConfigError("unknown ablation row '" + row + "'");
    }
  }
  try {
    cfg.model.validate();
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
  // Surface invalid stage overrides at load time.
  cfg.stage1_plan();
  cfg.stage2_plan();
  return cfg;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  if (!fs::exists(path)) throw ConfigError("config file '" + path + "' does not exist");
  ConfigMap map = parse_config_text(read_file(path));
  apply_overrides(map, overrides);
  return make_run_config(map, fs::path(path).parent_path().string().empty() ? "." : fs::path(path).parent_path().string());
}

}  // namespace protfuse
