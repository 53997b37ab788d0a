#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tasim/commands.hpp"

namespace {

struct BackendFlags {
  std::string kind = "scripted";
  std::string endpoint;
  std::string model;
  std::string api_key_env;
  std::uint64_t seed = 0;
  double temperature = 0.7;
  int max_tokens = 256;

  tasim::BackendConfig build() const {
    tasim::BackendConfig config;
    if (kind == "scripted") {
      config.kind = tasim::BackendKind::scripted;
      config.model_name = model.empty() ? "scripted" : model;
      config.seed = seed;
    } else {
      config.kind = tasim::BackendKind::http;
      config.endpoint_url = endpoint;
      config.model_name = model.empty() ? "gpt-4o" : model;
      config.api_key_env = api_key_env;
    }
    config.sampling.temperature = temperature;
    config.sampling.max_tokens = max_tokens;
    return config;
  }
};

void add_backend_flags(CLI::App* cmd, BackendFlags& flags) {
  cmd->add_option("--backend", flags.kind, "Model backend")
      ->check(CLI::IsMember({"scripted", "http"}))
      ->default_val("scripted");
  cmd->add_option("--endpoint", flags.endpoint,
                  "Chat-completions endpoint URL (http backend)");
  cmd->add_option("--model", flags.model, "Model name");
  cmd->add_option("--api-key-env", flags.api_key_env,
                  "Name of the env var holding the API key (http backend)");
  cmd->add_option("--temperature", flags.temperature, "Sampling temperature")
      ->default_val(0.7);
  cmd->add_option("--max-tokens", flags.max_tokens, "Completion token cap")
      ->default_val(256);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transactional-Analysis multi-agent dialogue simulator"};
  app.require_subcommand(1);

  // validate
  std::string validate_config;
  CLI::App* validate = app.add_subcommand(
      "validate", "Check a scenario config and its memory banks");
  validate->add_option("config", validate_config, "Scenario config file")
      ->required();

  // run
  tasim::RunArgs run_args;
  BackendFlags run_backend;
  std::string run_condition = "memory_on";
  CLI::App* run =
      app.add_subcommand("run", "Run one dialogue and print the turn log");
  run->add_option("--config", run_args.config_path, "Scenario config file")
      ->required();
  run->add_option("--condition", run_condition, "Memory condition")
      ->check(CLI::IsMember({"memory_on", "memory_off"}))
      ->default_val("memory_on");
  run->add_option("--seed", run_args.seed, "Run seed")->default_val(0);
  run->add_option("--out", run_args.out_dir, "Output directory")
      ->default_val("results");
  add_backend_flags(run, run_backend);

  // ablate
  tasim::AblateArgs ablate_args;
  BackendFlags ablate_backend;
  std::vector<std::string> ablate_conditions;
  int ablate_turns = 4;
  CLI::App* ablate = app.add_subcommand(
      "ablate", "Run the memory ON/OFF ablation and export the analysis");
  ablate->add_option("--config", ablate_args.config_path, "Scenario config file")
      ->required();
  ablate
      ->add_option("--dialogues", ablate_args.experiment.dialogues_per_condition,
                   "Dialogues per condition")
      ->default_val(22);
  ablate->add_option("--turns", ablate_turns, "Turns per agent")->default_val(4);
  ablate->add_option("--seed", ablate_args.experiment.base_seed, "Base seed")
      ->default_val(0);
  ablate
      ->add_option("--condition", ablate_conditions,
                   "Restrict to one or both conditions")
      ->check(CLI::IsMember({"memory_on", "memory_off"}));
  ablate->add_option("--parallel", ablate_args.experiment.parallelism,
                     "Concurrent dialogues (0 = per processor)")
      ->default_val(0);
  ablate->add_option("--out", ablate_args.out_dir, "Output directory")
      ->default_val("results");
  add_backend_flags(ablate, ablate_backend);

  // analyze
  std::string analyze_dir;
  CLI::App* analyze = app.add_subcommand(
      "analyze", "Re-derive tables and charts from stored transcripts");
  analyze->add_option("results_dir", analyze_dir, "Directory holding transcripts")
      ->required();

  // replay
  std::string replay_path;
  CLI::App* replay = app.add_subcommand(
      "replay", "Print the turn log of stored transcripts");
  replay->add_option("path", replay_path, "Transcript file or directory")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << '\n';
    return tasim::kExitUsage;
  }

  if (validate->parsed()) {
    return tasim::cmd_validate(validate_config, std::cout, std::cerr);
  }
  if (run->parsed()) {
    run_args.condition = tasim::parse_condition(run_condition);
    run_args.backend = run_backend.build();
    run_args.backend.seed = run_args.seed;
    return tasim::cmd_run(run_args, std::cout, std::cerr);
  }
  if (ablate->parsed()) {
    ablate_args.experiment.turns_override = ablate_turns;
    if (!ablate_conditions.empty()) {
      ablate_args.experiment.conditions.clear();
      for (const std::string& c : ablate_conditions) {
        ablate_args.experiment.conditions.push_back(tasim::parse_condition(c));
      }
      std::sort(ablate_args.experiment.conditions.begin(),
                ablate_args.experiment.conditions.end());
      ablate_args.experiment.conditions.erase(
          std::unique(ablate_args.experiment.conditions.begin(),
                      ablate_args.experiment.conditions.end()),
          ablate_args.experiment.conditions.end());
    }
    ablate_args.backend = ablate_backend.build();
    ablate_args.backend.seed = ablate_args.experiment.base_seed;
    return tasim::cmd_ablate(ablate_args, std::cout, std::cerr);
  }
  if (analyze->parsed()) {
    return tasim::cmd_analyze(analyze_dir, std::cout, std::cerr);
  }
  if (replay->parsed()) {
    return tasim::cmd_replay(replay_path, std::cout, std::cerr);
  }
  std::cerr << app.help() << '\n';
  return tasim::kExitUsage;
}
