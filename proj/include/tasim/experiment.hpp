#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tasim/conversation.hpp"
#include "tasim/core.hpp"
#include "tasim/dialogue.hpp"
#include "tasim/gateway.hpp"
#include "tasim/scenario.hpp"

namespace tasim {

struct ExperimentConfig {
  int dialogues_per_condition = 22;
  std::optional<int> turns_override;  // overrides the scenario's turns_per_agent
  std::vector<Condition> conditions = {Condition::memory_off,
                                       Condition::memory_on};
  std::uint64_t base_seed = 0;
  int parallelism = 0;  // 0: one worker per processor, capped at dialogue count
};

struct EgoStateDistribution {
  std::string agent_name;
  Condition condition = Condition::memory_off;
  std::map<EgoState, int> counts = {{EgoState::parent, 0},
                                    {EgoState::adult, 0},
                                    {EgoState::child, 0}};
  int total = 0;
  int fallbacks = 0;  // fallback turns are counted above and reported here
};

enum class TransactionKind { complementary, crossed, unclassified };

inline std::string_view to_string(TransactionKind k) {
  switch (k) {
    case TransactionKind::complementary: return "complementary";
    case TransactionKind::crossed: return "crossed";
    case TransactionKind::unclassified: return "unclassified";
  }
  return "unclassified";
}

struct TransactionAnnotation {
  int turn_index = 0;
  TransactionKind kind = TransactionKind::unclassified;
  std::optional<EgoState> prev_target;  // absent on the first turn
  EgoState cur_source = EgoState::adult;
};

struct ConditionSummary {
  Condition condition = Condition::memory_off;
  int completed_dialogues = 0;
  int failed_attempts = 0;
  std::map<std::string, int> responses_per_agent;
  std::map<std::string, int> fallbacks_per_agent;
  CounterSnapshot gateway;
};

struct AblationOutcome {
  std::filesystem::path run_dir;
  std::map<Condition, std::vector<Transcript>> transcripts;
  std::vector<ConditionSummary> summaries;
};

// Counts which ego state spoke each of the agent's turns. All transcripts
// must share one condition; ordering of the input does not matter.
inline EgoStateDistribution analyze_distribution(
    std::span<const Transcript> transcripts, const std::string& agent_name) {
  EgoStateDistribution dist;
  dist.agent_name = agent_name;
  if (!transcripts.empty()) dist.condition = transcripts.front().condition;

  bool agent_seen = false;
  for (const Transcript& t : transcripts) {
    if (t.condition != dist.condition) {
      throw ValidationError(
          "analyze_distribution: transcripts mix conditions");
    }
    for (const Turn& turn : t.turns) {
      if (turn.speaker != agent_name) continue;
      agent_seen = true;
      dist.counts[turn.selected_state] += 1;
      dist.total += 1;
      if (turn.fallback_used) dist.fallbacks += 1;
    }
  }
  if (!transcripts.empty() && !agent_seen) {
    throw ValidationError("analyze_distribution: agent \"" + agent_name +
                          "\" not present in transcripts");
  }
  return dist;
}

// Complementary iff the response comes from the ego state the previous
// utterance addressed; the first turn has nothing to respond to.
inline std::vector<TransactionAnnotation> classify_transactions(
    const Transcript& transcript) {
  std::vector<TransactionAnnotation> out;
  out.reserve(transcript.turns.size());
  for (std::size_t t = 0; t < transcript.turns.size(); ++t) {
    TransactionAnnotation a;
    a.turn_index = transcript.turns[t].index;
    a.cur_source = transcript.turns[t].selected_state;
    if (t == 0) {
      a.kind = TransactionKind::unclassified;
    } else {
      a.prev_target = transcript.turns[t - 1].addressed_state;
      a.kind = *a.prev_target == a.cur_source ? TransactionKind::complementary
                                              : TransactionKind::crossed;
    }
    out.push_back(a);
  }
  return out;
}

namespace detail {

struct AttemptResult {
  std::uint64_t attempt = 0;
  std::optional<Transcript> transcript;
  std::optional<Transcript> partial;  // set on failure
  std::string error;
  CounterSnapshot counters;
};

// Runs one wave of attempts across at most `workers` threads. Attempt
// scheduling is by fixed index, so the work split never affects the output.
inline std::vector<AttemptResult> run_wave(const PreparedScenario& prepared,
                                           const BackendConfig& backend,
                                           std::uint64_t base_seed,
                                           std::uint64_t first_attempt,
                                           int count, int workers) {
  std::vector<AttemptResult> results(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  auto work = [&] {
    for (;;) {
      int slot = next.fetch_add(1);
      if (slot >= count) return;
      AttemptResult& r = results[static_cast<std::size_t>(slot)];
      r.attempt = first_attempt + static_cast<std::uint64_t>(slot);
      std::uint64_t seed = base_seed + r.attempt;
      GatewaySession session(backend, seed);
      try {
        r.transcript = run_dialogue(prepared, seed, session);
      } catch (const DialogueError& e) {
        r.partial = e.partial_transcript();
        r.error = e.what();
      }
      r.counters = session.counters();
    }
  };
  int n = std::min(workers, count);
  if (n <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool.emplace_back(work);
    for (std::thread& th : pool) th.join();
  }
  return results;
}

inline std::string dialogue_file_name(int n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "dialogue-%03d.json", n);
  return buf;
}

}  // namespace detail

inline nlohmann::json summary_to_json(const AblationOutcome& outcome,
                                      const ScenarioConfig& scenario,
                                      const ExperimentConfig& experiment) {
  nlohmann::json conditions = nlohmann::json::object();
  for (const ConditionSummary& s : outcome.summaries) {
    conditions[std::string(to_string(s.condition))] = {
        {"completed_dialogues", s.completed_dialogues},
        {"failed_attempts", s.failed_attempts},
        {"responses_per_agent", s.responses_per_agent},
        {"fallbacks_per_agent", s.fallbacks_per_agent},
        {"gateway",
         {{"chat_calls", s.gateway.chat_calls},
          {"embed_calls", s.gateway.embed_calls},
          {"retrievals", s.gateway.retrievals}}}};
  }
  return {{"scenario_id", scenario.scenario_id},
          {"run_id", outcome.run_dir.filename().string()},
          {"base_seed", experiment.base_seed},
          {"dialogues_per_condition", experiment.dialogues_per_condition},
          {"turns_per_agent",
           experiment.turns_override.value_or(scenario.turns_per_agent)},
          {"conditions", conditions}};
}

// Runs the full ablation: for each condition, completes exactly
// dialogues_per_condition dialogues (failed attempts are kept as partial
// artifacts and re-run with offset seeds, bounded by 2x attempts), writes
// every transcript under <out_root>/<run-id>/<condition>/, and a summary.
inline AblationOutcome run_ablation(const ScenarioConfig& scenario_in,
                                    const ExperimentConfig& experiment,
                                    const BackendConfig& backend_in,
                                    const std::filesystem::path& out_root) {
  if (experiment.dialogues_per_condition < 1) {
    throw ConfigError("dialogues_per_condition must be >= 1");
  }
  if (experiment.conditions.empty()) {
    throw ConfigError("at least one condition is required");
  }
  ScenarioConfig scenario = scenario_in;
  if (experiment.turns_override.has_value()) {
    if (*experiment.turns_override < 1) {
      throw ConfigError("turns_per_agent must be >= 1");
    }
    scenario.turns_per_agent = *experiment.turns_override;
  }
  BackendConfig backend = effective_backend(backend_in, scenario);

  int workers = experiment.parallelism;
  if (workers <= 0) {
    workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers <= 0) workers = 1;
  }
  workers = std::min(workers, experiment.dialogues_per_condition);

  AblationOutcome outcome;
  std::string run_id = scenario.scenario_id + "-s" +
                       std::to_string(experiment.base_seed);
  outcome.run_dir = out_root / run_id;
  std::error_code ec;
  std::filesystem::create_directories(outcome.run_dir, ec);
  if (ec) {
    throw IoError("cannot create run directory " + outcome.run_dir.string() +
                  ": " + ec.message());
  }

  for (Condition condition : experiment.conditions) {
    std::filesystem::path cond_dir =
        outcome.run_dir / std::string(to_string(condition));
    std::filesystem::remove_all(cond_dir, ec);
    std::filesystem::create_directories(cond_dir, ec);
    if (ec) {
      throw IoError("cannot create " + cond_dir.string() + ": " + ec.message());
    }

    ConditionSummary summary;
    summary.condition = condition;

    // Banks are loaded and indexed once per condition; indexing embeds are
    // part of this condition's gateway counters.
    GatewaySession index_session(backend, experiment.base_seed);
    PreparedScenario prepared =
        prepare_scenario(scenario, condition, index_session.embedder());
    summary.gateway += index_session.counters();

    const int needed = experiment.dialogues_per_condition;
    const std::uint64_t max_attempts = 2ULL * static_cast<std::uint64_t>(needed);
    std::vector<Transcript>& kept = outcome.transcripts[condition];
    std::uint64_t attempts_used = 0;
    while (static_cast<int>(kept.size()) < needed &&
           attempts_used < max_attempts) {
      int missing = needed - static_cast<int>(kept.size());
      int wave = static_cast<int>(
          std::min<std::uint64_t>(missing, max_attempts - attempts_used));
      auto results = detail::run_wave(prepared, backend, experiment.base_seed,
                                      attempts_used, wave, workers);
      attempts_used += static_cast<std::uint64_t>(wave);
      for (detail::AttemptResult& r : results) {
        summary.gateway += r.counters;
        if (r.transcript.has_value()) {
          if (static_cast<int>(kept.size()) < needed) {
            kept.push_back(std::move(*r.transcript));
          }
        } else {
          summary.failed_attempts += 1;
          std::filesystem::path failed_dir = cond_dir / "failed";
          std::filesystem::create_directories(failed_dir, ec);
          char name[48];
          std::snprintf(name, sizeof(name), "attempt-%03llu.partial.json",
                        static_cast<unsigned long long>(r.attempt));
          nlohmann::json artifact = {
              {"error", r.error},
              {"transcript", transcript_to_json(*r.partial)}};
          std::ofstream out(failed_dir / name, std::ios::binary);
          out << artifact.dump(2) << '\n';
        }
      }
    }
    if (static_cast<int>(kept.size()) < needed) {
      throw BackendError(BackendError::Kind::transport,
                         "backend exhaustion: completed " +
                             std::to_string(kept.size()) + " of " +
                             std::to_string(needed) + " dialogues for " +
                             std::string(to_string(condition)) + " after " +
                             std::to_string(attempts_used) +
                             " attempts (partial results kept in " +
                             cond_dir.string() + ")");
    }

    for (std::size_t n = 0; n < kept.size(); ++n) {
      save_transcript(kept[n],
                      cond_dir / detail::dialogue_file_name(static_cast<int>(n)));
      for (const Turn& turn : kept[n].turns) {
        summary.responses_per_agent[turn.speaker] += 1;
        if (turn.fallback_used) summary.fallbacks_per_agent[turn.speaker] += 1;
      }
    }
    for (const AgentSpec& agent : scenario.agents) {
      summary.responses_per_agent.try_emplace(agent.name, 0);
      summary.fallbacks_per_agent.try_emplace(agent.name, 0);
    }
    summary.completed_dialogues = static_cast<int>(kept.size());
    outcome.summaries.push_back(std::move(summary));
  }

  std::ofstream summary_out(outcome.run_dir / "summary.json", std::ios::binary);
  if (!summary_out) {
    throw IoError("cannot write " + (outcome.run_dir / "summary.json").string());
  }
  summary_out << summary_to_json(outcome, scenario, experiment).dump(2) << '\n';
  return outcome;
}

}  // namespace tasim
