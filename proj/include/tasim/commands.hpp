#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tasim/conversation.hpp"
#include "tasim/core.hpp"
#include "tasim/dialogue.hpp"
#include "tasim/experiment.hpp"
#include "tasim/export.hpp"
#include "tasim/gateway.hpp"
#include "tasim/scenario.hpp"

namespace tasim {

// Exit codes: 0 ok, 1 validation/analysis failure, 2 usage/config,
// 3 runtime/backend.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

namespace detail {

template <typename Fn>
int guarded(Fn&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const BackendError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

// A missing or unreadable config file is a usage problem, not a runtime one.
inline ScenarioConfig load_scenario_for_command(
    const std::filesystem::path& path) {
  try {
    return load_scenario(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace detail

// Turn-by-turn console log with per-line ego-state tags.
inline void print_transcript(const Transcript& t, std::ostream& out) {
  out << "scenario " << t.scenario_id << " | " << to_string(t.condition)
      << " | seed " << t.seed << '\n';
  for (const Turn& turn : t.turns) {
    out << '[' << turn.index << "] " << turn.speaker << " ("
        << state_letter(turn.selected_state) << " -> "
        << to_string(turn.addressed_state)
        << (turn.fallback_used ? ", fallback" : "") << "): " << turn.text
        << '\n';
  }
}

inline int cmd_validate(const std::filesystem::path& config_path,
                        std::ostream& out, std::ostream& err) {
  return detail::guarded(
      [&] {
        std::vector<std::string> issues;
        try {
          issues = validate_scenario_file(config_path);
        } catch (const IoError& e) {
          throw ConfigError(e.what());
        }
        if (issues.empty()) {
          out << "ok: " << config_path.string() << " is valid\n";
          return kExitOk;
        }
        for (const std::string& issue : issues) {
          out << "violation: " << issue << '\n';
        }
        out << issues.size() << " violation(s) found\n";
        return kExitValidation;
      },
      err);
}

struct RunArgs {
  std::filesystem::path config_path;
  Condition condition = Condition::memory_on;
  std::uint64_t seed = 0;
  BackendConfig backend;
  std::filesystem::path out_dir = "results";
};

inline int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
  return detail::guarded(
      [&] {
        ScenarioConfig scenario =
            detail::load_scenario_for_command(args.config_path);
        std::string run_id = scenario.scenario_id + "-s" +
                             std::to_string(args.seed) + "-single";
        std::filesystem::path dir = args.out_dir / run_id /
                                    std::string(to_string(args.condition));
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) {
          throw IoError("cannot create " + dir.string() + ": " + ec.message());
        }

        GatewaySession session(effective_backend(args.backend, scenario),
                               args.seed);
        PreparedScenario prepared =
            prepare_scenario(scenario, args.condition, session.embedder());
        Transcript transcript;
        try {
          transcript = run_dialogue(prepared, args.seed, session);
        } catch (const DialogueError& e) {
          save_transcript(e.partial_transcript(), dir / "dialogue-000.partial.json");
          err << "partial transcript kept at "
              << (dir / "dialogue-000.partial.json").string() << '\n';
          throw;
        }
        save_transcript(transcript, dir / "dialogue-000.json");
        print_transcript(transcript, out);
        CounterSnapshot c = session.counters();
        out << "gateway: chat_calls=" << c.chat_calls
            << " embed_calls=" << c.embed_calls
            << " retrievals=" << c.retrievals << '\n';
        out << "transcript written to " << (dir / "dialogue-000.json").string()
            << '\n';
        return kExitOk;
      },
      err);
}

struct AblateArgs {
  std::filesystem::path config_path;
  ExperimentConfig experiment;
  BackendConfig backend;
  std::filesystem::path out_dir = "results";
};

inline int cmd_ablate(const AblateArgs& args, std::ostream& out,
                      std::ostream& err) {
  return detail::guarded(
      [&] {
        ScenarioConfig scenario =
            detail::load_scenario_for_command(args.config_path);
        AblationOutcome outcome = run_ablation(scenario, args.experiment,
                                               args.backend, args.out_dir);
        write_analysis(outcome.transcripts, outcome.run_dir / "analysis");
        for (const ConditionSummary& s : outcome.summaries) {
          out << to_string(s.condition) << ": " << s.completed_dialogues
              << " dialogues";
          if (s.failed_attempts > 0) {
            out << " (" << s.failed_attempts << " failed attempts)";
          }
          for (const auto& [agent, responses] : s.responses_per_agent) {
            out << ", " << agent << "=" << responses << " responses";
          }
          out << '\n';
        }
        out << "results written to " << outcome.run_dir.string() << '\n';
        return kExitOk;
      },
      err);
}

inline int cmd_analyze(const std::filesystem::path& results_dir,
                       std::ostream& out, std::ostream& err) {
  return detail::guarded(
      [&] {
        if (!std::filesystem::is_directory(results_dir)) {
          throw ConfigError("results directory not found: " +
                            results_dir.string());
        }
        std::vector<std::filesystem::path> files;
        for (const auto& entry :
             std::filesystem::recursive_directory_iterator(results_dir)) {
          if (!entry.is_regular_file()) continue;
          std::string name = entry.path().filename().string();
          if (name.rfind("dialogue-", 0) == 0 && name.size() > 5 &&
              name.substr(name.size() - 5) == ".json" &&
              name.find(".partial.") == std::string::npos) {
            files.push_back(entry.path());
          }
        }
        std::sort(files.begin(), files.end());

        std::map<Condition, std::vector<Transcript>> by_condition;
        int bad = 0;
        for (const std::filesystem::path& file : files) {
          try {
            Transcript t = load_transcript(file);
            std::vector<std::string> impure = selection_purity_violations(t);
            if (!impure.empty()) {
              ++bad;
              for (const std::string& v : impure) {
                err << file.string() << ": " << v << '\n';
              }
              continue;
            }
            by_condition[t.condition].push_back(std::move(t));
          } catch (const Error& e) {
            ++bad;
            err << file.string() << ": " << e.what() << '\n';
          }
        }
        if (by_condition.empty()) {
          throw ValidationError("found 0 usable transcripts under " +
                                results_dir.string());
        }

        std::vector<EgoStateDistribution> dists =
            write_analysis(by_condition, results_dir / "analysis");
        for (const EgoStateDistribution& d : dists) {
          out << slug(d.agent_name) << " " << to_string(d.condition)
              << ": parent=" << d.counts.at(EgoState::parent)
              << " adult=" << d.counts.at(EgoState::adult)
              << " child=" << d.counts.at(EgoState::child)
              << " total=" << d.total << " fallbacks=" << d.fallbacks << '\n';
        }
        out << "analysis written to " << (results_dir / "analysis").string()
            << '\n';
        return bad == 0 ? kExitOk : kExitValidation;
      },
      err);
}

inline int cmd_replay(const std::filesystem::path& path, std::ostream& out,
                      std::ostream& err) {
  return detail::guarded(
      [&] {
        std::vector<std::filesystem::path> files;
        if (std::filesystem::is_directory(path)) {
          for (const auto& entry :
               std::filesystem::recursive_directory_iterator(path)) {
            if (!entry.is_regular_file()) continue;
            std::string name = entry.path().filename().string();
            if (name.rfind("dialogue-", 0) == 0 && name.size() > 5 &&
                name.substr(name.size() - 5) == ".json" &&
                name.find(".partial.") == std::string::npos) {
              files.push_back(entry.path());
            }
          }
          std::sort(files.begin(), files.end());
          if (files.empty()) {
            throw ValidationError("no transcripts under " + path.string());
          }
        } else if (std::filesystem::is_regular_file(path)) {
          files.push_back(path);
        } else {
          throw ConfigError("no such transcript or directory: " + path.string());
        }
        bool first = true;
        for (const std::filesystem::path& file : files) {
          if (!first) out << '\n';
          first = false;
          print_transcript(load_transcript(file), out);
        }
        return kExitOk;
      },
      err);
}

}  // namespace tasim
