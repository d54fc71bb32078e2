#include "protfuse/commands.hpp"

#include "protfuse/text_decoder.hpp"
#include "protfuse/text_io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <filesystem>
#include <numeric>

namespace protfuse {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return exit_code::kConfig;
  if (dynamic_cast<const DataError*>(&e)) return exit_code::kData;
  return exit_code::kRuntime;
}

void cmd_fixtures(const FixtureConfig& cfg, const std::string& out_dir, std::ostream& out) {
  const FixtureSet fx = generate_fixtures(cfg);
  write_fixtures(fx, out_dir);
  out << fmt::format("wrote {} structures, {} annotations, {} PEER tasks, {} instruction tasks to {}\n",
                     fx.structures.size(), fx.annotations.size(), fx.peer.size(), fx.molinst.size(), out_dir);
}

namespace {

const char* kSplitFiles[] = {"projection", "finetune_train", "finetune_valid", "finetune_test"};

std::string dataset_path(const RunConfig& cfg, const std::string& name) {
  return cfg.data_dir() + "/" + name + ".jsonl";
}

std::string split_file(const std::string& split) {
  if (split == "train") return "finetune_train";
  if (split == "validation") return "finetune_valid";
  return "finetune_test";
}

std::vector<InstructionExample> load_split(const RunConfig& cfg, const std::string& name) {
  const std::string path = dataset_path(cfg, name);
  if (!fs::exists(path)) throw DataError("dataset '" + path + "' not found; run build-data first");
  return load_dataset(path);
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string seed_dir(const RunConfig& cfg, std::uint64_t seed) {
  return fmt::format("{}/seed{}", cfg.output_dir, seed);
}

// Everything the pretrained decoder depends on. Fusion matters only through
// the number of placeholder rows.
std::string pretrain_signature(const RunConfig& cfg, const std::string& corpus_text) {
  return fmt::format("hash={:016x} rows={} steps={} batch={} lr={} seed={} corpus={:016x}",
                     model_config_hash(cfg.model), cfg.model.protein_tokens(1), cfg.decoder_pretrain.steps,
                     cfg.decoder_pretrain.batch_size, cfg.decoder_pretrain.lr, cfg.decoder_pretrain.seed,
                     fnv1a(corpus_text));
}

class MetricsLog {
 public:
  MetricsLog(std::string path, std::uint64_t seed) : path_(std::move(path)), seed_(seed) {}

  void record(const StepRecord& r) {
    json j;
    j["seed"] = seed_;
    j["stage"] = to_string(r.stage);
    j["step"] = r.step;
    j["loss"] = r.loss;
    j["lr"] = r.lr;
    j["grad_norm"] = r.grad_norm;
    text_ += j.dump() + "\n";
  }
  void flush() const { write_file(path_, text_); }

 private:
  std::string path_;
  std::uint64_t seed_;
  std::string text_;
};

StepCallback progress(std::ostream& out, const std::string& label, std::uint64_t total,
                      std::function<void(const StepRecord&)> also = {}) {
  const std::uint64_t every = std::max<std::uint64_t>(1, total / 10);
  return [&out, label, total, every, also](const StepRecord& r) {
    if (also) also(r);
    if (r.step % every == 0 || r.step == total) {
      out << fmt::format("  {} step {:>5}/{} loss {:.4f} lr {:.2e}\n", label, r.step, total, r.loss, r.lr);
      out.flush();
    }
  };
}

// Text-only decoder pretraining, shared by every seed of a run and cached in
// `cache_dir` keyed by its signature.
ModelParams<float> pretrained_decoder(const RunConfig& cfg, const ProteinStore& store, const std::string& cache_dir,
                                      std::ostream& out) {
  const std::string corpus_text = read_file(dataset_path(cfg, "projection")) +
                                  read_file(dataset_path(cfg, "finetune_train"));
  const std::string signature = pretrain_signature(cfg, corpus_text);
  const std::string tag = fmt::format("{:016x}", fnv1a(signature));
  const std::string ckpt = cache_dir + "/decoder_pretrained_" + tag + ".ckpt";
  const std::string sidecar = cache_dir + "/decoder_pretrained_" + tag + ".sig";
  if (fs::exists(ckpt) && fs::exists(sidecar) && read_file(sidecar) == signature + "\n") {
    out << "reusing pretrained decoder " << ckpt << "\n";
    return load_checkpoint(ckpt, &cfg.model).params;
  }

  auto examples = load_split(cfg, "projection");
  const auto train = load_split(cfg, "finetune_train");
  examples.insert(examples.end(), train.begin(), train.end());
  const Corpus corpus(examples, store, cfg.model.graph);

  TrainState<float> state = make_train_state(init_model_params<float>(cfg.model, cfg.decoder_pretrain.seed),
                                             cfg.decoder_pretrain.seed);
  const StagePlan plan = make_stage_plan(Stage::decoder_pretrain,
                                         {{"steps", std::to_string(cfg.decoder_pretrain.steps)},
                                          {"batch_size", std::to_string(cfg.decoder_pretrain.batch_size)},
                                          {"lr", fmt::format("{}", cfg.decoder_pretrain.lr)}});
  out << fmt::format("decoder pretraining: {} steps over {} examples\n", cfg.decoder_pretrain.steps, corpus.size());
  train_stage(plan, cfg.model, corpus.examples(), state,
              progress(out, "decoder_pretrain", plan.total_steps(corpus.size())));
  fs::create_directories(cache_dir);
  save_checkpoint(state, cfg.model, ckpt);
  write_file(sidecar, signature + "\n");
  return state.params;
}

std::vector<SeedRun> train_runs(const RunConfig& cfg, const std::string& cache_dir, std::ostream& out) {
  const ProteinStore store = ProteinStore::load_directory(cfg.inputs.structures_dir);
  const Corpus projection(load_split(cfg, "projection"), store, cfg.model.graph);
  const Corpus train(load_split(cfg, "finetune_train"), store, cfg.model.graph);

  std::optional<ModelParams<float>> pretrained;
  if (cfg.decoder_pretrain.steps > 0) pretrained = pretrained_decoder(cfg, store, cache_dir, out);

  std::vector<SeedRun> runs;
  for (std::uint64_t seed : cfg.seeds) {
    SeedRun run;
    run.seed = seed;
    const std::string dir = seed_dir(cfg, seed);
    fs::create_directories(dir);
    run.init_checkpoint = dir + "/init.ckpt";
    run.model_checkpoint = dir + "/model.ckpt";
    run.metrics_log = dir + "/metrics.jsonl";
    out << fmt::format("seed {} ({})\n", seed, to_string(cfg.recipe));

    TrainState<float> state = make_train_state(init_model_params<float>(cfg.model, seed), seed);
    if (pretrained) {
      state.params[Partition::decoder] = (*pretrained)[Partition::decoder];
      state.params[Partition::embed_table] = (*pretrained)[Partition::embed_table];
    }
    if (cfg.mlm.steps > 0) {
      std::vector<ResidueTokenIds> sequences;
      for (const auto& [id, s] : store.all()) sequences.push_back(prepare_protein(s, cfg.model.graph).tokens);
      const auto mlm = pretrain_sequence_encoder(cfg.model, sequences, state, cfg.mlm.steps, cfg.mlm.batch_size,
                                                 cfg.mlm.lr, cfg.mlm.mask_rate);
      out << fmt::format("  mlm {} steps, final loss {:.4f}\n", mlm.size(), mlm.back());
    }
    save_checkpoint(state, cfg.model, run.init_checkpoint);

    MetricsLog log(run.metrics_log, seed);
    auto run_stage = [&](const StagePlan& plan, const Corpus& corpus, std::vector<double>& losses) {
      const std::size_t before = state.loss_history.size();
      train_stage(plan, cfg.model, corpus.examples(), state,
                  progress(out, to_string(plan.stage), plan.total_steps(corpus.size()),
                           [&](const StepRecord& r) { log.record(r); }));
      losses.assign(state.loss_history.begin() + static_cast<std::ptrdiff_t>(before), state.loss_history.end());
    };
    if (cfg.recipe != Recipe::stage2_only) run_stage(cfg.stage1_plan(), projection, run.stage1_losses);
    if (cfg.recipe != Recipe::stage1_only) run_stage(cfg.stage2_plan(), train, run.stage2_losses);
    log.flush();
    if (!state.params.all_finite()) throw TrainingError(fmt::format("seed {}: parameters are not finite", seed));
    save_checkpoint(state, cfg.model, run.model_checkpoint);
    runs.push_back(std::move(run));
  }
  return runs;
}

json prediction_json(const Prediction& p) {
  return json{{"id", p.id},
              {"task_tag", to_string(p.task)},
              {"reference", p.reference},
              {"prediction", p.prediction},
              {"protein_tokens", p.protein_tokens},
              {"generated_tokens", p.generated_tokens}};
}

std::vector<InstructionExample> limit(std::vector<InstructionExample> examples, std::size_t max_examples) {
  if (max_examples == 0 || examples.size() <= max_examples) return examples;
  // Keep every task represented: take examples round-robin over tasks.
  std::map<TaskTag, std::vector<InstructionExample>> by_task;
  for (auto& ex : examples) by_task[ex.task].push_back(std::move(ex));
  std::vector<InstructionExample> out;
  for (std::size_t i = 0; out.size() < max_examples; ++i) {
    bool any = false;
    for (auto& [task, list] : by_task) {
      if (i < list.size() && out.size() < max_examples) {
        out.push_back(list[i]);
        any = true;
      }
    }
    if (!any) break;
  }
  return out;
}

}  // namespace

BuiltData cmd_build_data(const RunConfig& cfg, std::ostream& out) {
  const ProteinStore store = ProteinStore::load_directory(cfg.inputs.structures_dir);
  BuiltData data = build_data(cfg.inputs, store, cfg.data_seed);
  fs::create_directories(cfg.data_dir());
  const std::vector<InstructionExample>* sets[] = {&data.projection, &data.train, &data.validation, &data.test};
  for (std::size_t i = 0; i < 4; ++i) {
    save_dataset(*sets[i], dataset_path(cfg, kSplitFiles[i]));
    out << fmt::format("{} ({} examples)\n{}", kSplitFiles[i], sets[i]->size(), count_summary(*sets[i]));
  }
  out << fmt::format("description records dropped for test-split proteins: {}\n", data.leakage_dropped);
  return data;
}

std::vector<SeedRun> cmd_train(const RunConfig& cfg, std::ostream& out) {
  return train_runs(cfg, cfg.output_dir, out);
}

SeedEvaluation evaluate_model(const ModelConfig& model, const ModelParams<float>& params, const Corpus& corpus,
                              int max_new_tokens, std::uint64_t seed) {
  SeedEvaluation ev;
  ev.seed = seed;
  std::map<TaskTag, std::vector<double>> rouge, critical;
  std::map<TaskTag, std::vector<std::string>> predicted, gold;
  const CriticalRules& rules = CriticalRules::bundled();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const PreparedExample& ex = corpus.examples()[i];
    const InstructionExample& src = corpus.source()[i];
    const std::vector<int> ids = generate_answer(model, params, ex.question_ids, ex.proteins, max_new_tokens);
    Prediction p{ex.id, src.task, src.answer, detokenize_text(ids), 0, ids.size()};
    for (const ProteinInput* protein : ex.proteins) p.protein_tokens += std::size_t(model.protein_tokens(protein->length()));
    if (is_classification(src.task)) {
      predicted[src.task].push_back(parse_classification(p.prediction, src.task));
      gold[src.task].push_back(parse_classification(src.answer, src.task));
    } else {
      rouge[src.task].push_back(rouge_l(src.answer, p.prediction));
      if (rules.supports(src.task)) critical[src.task].push_back(rouge_l_critical(src.answer, p.prediction, src.task, rules));
    }
    ++ev.examples_per_task[to_string(src.task)];
    ev.predictions.push_back(std::move(p));
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); };
  for (const auto& [task, v] : rouge) ev.scores[{to_string(task), "rouge_l"}] = mean(v);
  for (const auto& [task, v] : critical) ev.scores[{to_string(task), "rouge_l_critical"}] = mean(v);
  for (const auto& [task, v] : predicted) ev.scores[{to_string(task), "accuracy"}] = accuracy(v, gold[task]);
  return ev;
}

std::vector<EvalReport> cmd_eval(const RunConfig& cfg, std::ostream& out) {
  if (cfg.seeds.size() != 3) {
    throw ConfigError(fmt::format("evaluation reports mean and std over exactly 3 seeds; train.seeds has {}",
                                  cfg.seeds.size()));
  }
  const ProteinStore store = ProteinStore::load_directory(cfg.inputs.structures_dir);
  const Corpus corpus(limit(load_split(cfg, split_file(cfg.eval_split)), cfg.eval_max_examples), store,
                      cfg.model.graph);
  const std::string eval_dir = cfg.output_dir + "/eval";
  fs::create_directories(eval_dir);

  std::vector<SeedEvaluation> runs;
  for (std::uint64_t seed : cfg.seeds) {
    const std::string ckpt = seed_dir(cfg, seed) + "/model.ckpt";
    if (!fs::exists(ckpt)) throw DataError("checkpoint '" + ckpt + "' not found; run train first");
    const TrainState<float> state = load_checkpoint(ckpt, &cfg.model);
    out << fmt::format("evaluating seed {} on {} {} examples\n", seed, corpus.size(), cfg.eval_split);
    runs.push_back(evaluate_model(cfg.model, state.params, corpus, cfg.eval_max_new_tokens, seed));
    std::string lines;
    // Generated bytes need not be valid UTF-8.
    for (const auto& p : runs.back().predictions) {
      lines += prediction_json(p).dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    }
    write_file(fmt::format("{}/predictions_seed{}.jsonl", eval_dir, seed), lines);
  }

  std::vector<EvalReport> reports;
  for (const auto& [key, score] : runs.front().scores) {
    std::vector<double> per_seed;
    for (const auto& r : runs) per_seed.push_back(r.scores.at(key));
    reports.push_back(aggregate_runs(per_seed, key.first, key.second, runs.front().examples_per_task.at(key.first)));
  }
  write_file(eval_dir + "/report.jsonl", report_to_jsonl(reports));
  const std::string table = summary_table(reports);
  write_file(eval_dir + "/summary.txt", table);
  out << table;
  return reports;
}

std::string cmd_generate(const RunConfig& cfg, const std::string& checkpoint, const std::string& question,
                         const std::vector<std::string>& protein_ids, std::ostream& out) {
  if (protein_ids.empty()) throw ConfigError("generate needs at least one protein id");
  std::string q = question;
  const std::size_t placeholders = count_placeholders(q);
  if (placeholders == 0) {
    for (std::size_t i = 0; i < protein_ids.size(); ++i) q += " <protein>";
  } else if (placeholders != protein_ids.size()) {
    throw ConfigError(fmt::format("question has {} placeholders but {} protein ids were given", placeholders,
                                  protein_ids.size()));
  }
  const ProteinStore store = ProteinStore::load_directory(cfg.inputs.structures_dir);
  std::vector<ProteinInput> inputs;
  for (const auto& id : protein_ids) inputs.push_back(prepare_protein(store.at(id), cfg.model.graph));
  std::vector<const ProteinInput*> ptrs;
  for (const auto& p : inputs) ptrs.push_back(&p);
  const TrainState<float> state = load_checkpoint(checkpoint, &cfg.model);
  const std::string answer =
      detokenize_text(generate_answer(cfg.model, state.params, tokenize_text(q), ptrs, cfg.eval_max_new_tokens));
  out << answer << "\n";
  return answer;
}

RunConfig ablation_config(const RunConfig& base, const std::string& row) {
  RunConfig cfg = base;
  if (row == "full") {
  } else if (row == "no_structure") {
    cfg.model.fusion = FusionMode::seq_only;
  } else if (row == "no_sequence") {
    cfg.model.fusion = FusionMode::struct_only;
  } else if (row == "no_fusion") {
    cfg.model.fusion = FusionMode::concat_tokens;
  } else if (row == "stage1_stage2") {
    cfg.recipe = Recipe::stage1_stage2;
  } else {
    throw ConfigError("unknown ablation row '" + row + "'");
  }
  cfg.dataset_dir = base.data_dir();
  cfg.output_dir = base.output_dir + "/ablate/" + row;
  if (!base.ablate_seeds.empty()) cfg.seeds = base.ablate_seeds;
  return cfg;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, std::ostream& out) {
  const ProteinStore store = ProteinStore::load_directory(cfg.inputs.structures_dir);
  const Corpus corpus(limit(load_split(cfg, split_file(cfg.eval_split)), cfg.eval_max_examples), store,
                      cfg.model.graph);
  const std::string ablate_dir = cfg.output_dir + "/ablate";
  fs::create_directories(ablate_dir);

  std::vector<AblationRow> rows;
  for (const std::string& name : cfg.ablate_rows) {
    const RunConfig rc = ablation_config(cfg, name);
    out << fmt::format("== ablation row {} (fusion {}, recipe {})\n", name, to_string(rc.model.fusion),
                       to_string(rc.recipe));
    const std::vector<SeedRun> runs = train_runs(rc, cfg.output_dir, out);

    AblationRow row;
    row.name = name;
    row.fusion = to_string(rc.model.fusion);
    row.recipe = to_string(rc.recipe);
    std::vector<double> rouge, acc, final_loss;
    for (const SeedRun& run : runs) {
      const TrainState<float> state = load_checkpoint(run.model_checkpoint, &rc.model);
      const SeedEvaluation ev = evaluate_model(rc.model, state.params, corpus, rc.eval_max_new_tokens, run.seed);
      for (const auto& [key, score] : ev.scores) {
        if (key.second == "rouge_l") rouge.push_back(score);
        if (key.second == "accuracy") acc.push_back(score);
      }
      const auto& losses = run.stage2_losses.empty() ? run.stage1_losses : run.stage2_losses;
      if (!losses.empty()) final_loss.push_back(smooth(losses, 20).back());
      if (row.protein_tokens.empty()) {
        for (const auto& p : ev.predictions) {
          row.protein_tokens.push_back(p.protein_tokens);
          row.generated_tokens.push_back(p.generated_tokens);
        }
      }
    }
    auto mean = [](const std::vector<double>& v) {
      return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    };
    row.protein_tokens_total = std::accumulate(row.protein_tokens.begin(), row.protein_tokens.end(), std::size_t{0});
    row.protein_tokens_per_example =
        row.protein_tokens.empty() ? 0.0 : double(row.protein_tokens_total) / double(row.protein_tokens.size());
    row.mean_rouge_l = mean(rouge);
    row.mean_accuracy = mean(acc);
    row.final_loss = mean(final_loss);
    rows.push_back(std::move(row));
  }

  std::string table = fmt::format("{:<14} {:<14} {:<14} {:>14} {:>9} {:>9} {:>10}\n", "row", "fusion", "recipe",
                                  "prot_tok/ex", "rouge_l", "accuracy", "final_loss");
  std::string jsonl;
  std::string tokens = "row\texample\tprotein_tokens\tgenerated_tokens\n";
  for (const auto& r : rows) {
    table += fmt::format("{:<14} {:<14} {:<14} {:>14.2f} {:>9.4f} {:>9.4f} {:>10.4f}\n", r.name, r.fusion, r.recipe,
                         r.protein_tokens_per_example, r.mean_rouge_l, r.mean_accuracy, r.final_loss);
    jsonl += json{{"row", r.name},
                  {"fusion", r.fusion},
                  {"recipe", r.recipe},
                  {"protein_tokens_per_example", r.protein_tokens_per_example},
                  {"protein_tokens_total", r.protein_tokens_total},
                  {"rouge_l", r.mean_rouge_l},
                  {"accuracy", r.mean_accuracy},
                  {"final_loss", r.final_loss}}
                 .dump() +
             "\n";
    for (std::size_t i = 0; i < r.protein_tokens.size(); ++i) {
      tokens += fmt::format("{}\t{}\t{}\t{}\n", r.name, corpus.examples()[i].id, r.protein_tokens[i],
                            r.generated_tokens[i]);
    }
  }
  write_file(ablate_dir + "/table.txt", table);
  write_file(ablate_dir + "/table.jsonl", jsonl);
  write_file(ablate_dir + "/tokens.tsv", tokens);
  out << table;
  return rows;
}

}  // namespace protfuse
