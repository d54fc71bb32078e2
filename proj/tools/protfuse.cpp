#include "protfuse/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace protfuse;

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.path, "run config file")->required();
  cmd->add_option("-s,--set", args.overrides, "override a config key, e.g. --set train.stage2.lr=1e-3");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"protfuse: structure- and sequence-aware protein instruction model"};
  app.require_subcommand(1);

  ConfigArgs build_args, train_args, eval_args, gen_args, ablate_args;
  auto* build = app.add_subcommand("build-data", "verbalize inputs into projection and fine-tuning datasets");
  add_config_options(build, build_args);
  auto* train = app.add_subcommand("train", "train every configured seed");
  add_config_options(train, train_args);
  auto* eval = app.add_subcommand("eval", "greedy generation and scoring over three seeds");
  add_config_options(eval, eval_args);
  auto* ablate = app.add_subcommand("ablate", "train and score the ablation grid");
  add_config_options(ablate, ablate_args);

  auto* gen = app.add_subcommand("generate", "answer one question about one or two proteins");
  add_config_options(gen, gen_args);
  std::string checkpoint, question;
  std::vector<std::string> proteins;
  gen->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  gen->add_option("-q,--question", question, "question text; '<protein>' marks each protein")->required();
  gen->add_option("-p,--protein", proteins, "protein id in the structure store")->required();

  auto* fixtures = app.add_subcommand("fixtures", "write the synthetic desk corpus");
  FixtureConfig fixture_cfg;
  std::string fixture_dir;
  fixtures->add_option("-o,--out", fixture_dir, "output directory")->required();
  fixtures->add_option("--proteins", fixture_cfg.num_proteins, "number of proteins")->capture_default_str();
  fixtures->add_option("--peer-per-split", fixture_cfg.peer_per_split, "PEER instances per split and task")
      ->capture_default_str();
  fixtures->add_option("--seed", fixture_cfg.seed, "generator seed")->capture_default_str();

  std::string keys_footer = "\nConfig keys:\n";
  for (const auto& [key, help] : config_keys()) keys_footer += "  " + key + "  " + help + "\n";
  app.footer(keys_footer);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code::kConfig;
  }

  try {
    if (*fixtures) {
      cmd_fixtures(fixture_cfg, fixture_dir, std::cout);
    } else if (*build) {
      cmd_build_data(load_run_config(build_args.path, build_args.overrides), std::cout);
    } else if (*train) {
      cmd_train(load_run_config(train_args.path, train_args.overrides), std::cout);
    } else if (*eval) {
      cmd_eval(load_run_config(eval_args.path, eval_args.overrides), std::cout);
    } else if (*gen) {
      cmd_generate(load_run_config(gen_args.path, gen_args.overrides), checkpoint, question, proteins, std::cout);
    } else if (*ablate) {
      cmd_ablate(load_run_config(ablate_args.path, ablate_args.overrides), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return exit_code::kOk;
}
