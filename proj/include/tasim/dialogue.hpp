#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tasim/agent.hpp"
#include "tasim/conversation.hpp"
#include "tasim/core.hpp"
#include "tasim/ego_state.hpp"
#include "tasim/gateway.hpp"
#include "tasim/scenario.hpp"

namespace tasim {

// A backend failure mid-dialogue. Carries whatever turns completed so the
// caller can keep a partial-transcript artifact for debugging; partials are
// excluded from analysis.
class DialogueError : public BackendError {
 public:
  DialogueError(const BackendError& cause, Transcript partial)
      : BackendError(cause.kind(), cause.what()), partial_(std::move(partial)) {}

  const Transcript& partial_transcript() const { return partial_; }

 private:
  Transcript partial_;
};

// Scenario resolved for one condition: agent profiles with their banks loaded
// and indexed (memory_on) or left bank-less (memory_off). Banks are shared
// read-only across all dialogues of the condition.
struct PreparedScenario {
  ScenarioConfig config;
  Condition condition = Condition::memory_off;
  std::array<AgentProfile, 2> agents;  // agents[0] is the opener
};

inline PreparedScenario prepare_scenario(const ScenarioConfig& config,
                                         Condition condition,
                                         const EmbedFn& embed) {
  PreparedScenario prepared;
  prepared.config = config;
  prepared.condition = condition;

  std::size_t opener_slot = config.agents[0].name == config.opener ? 0 : 1;
  for (std::size_t out = 0; out < 2; ++out) {
    const AgentSpec& spec = config.agents[(opener_slot + out) % 2];
    AgentProfile& agent = prepared.agents[out];
    agent.agent_name = spec.name;
    agent.life_script = spec.life_script;
    for (EgoState s : kAllEgoStates) {
      const EgoStateSpec& state_spec = spec.ego_states[state_index(s)];
      EgoStateProfile& profile = agent.ego_states[state_index(s)];
      profile.state = s;
      profile.system_prompt = state_spec.system_prompt;
      profile.retrieval_k = config.retrieval_k;
      profile.min_score = config.min_score;
      if (condition == Condition::memory_on && state_spec.bank_path.has_value()) {
        MemoryBank bank = load_bank(*state_spec.bank_path, embed);
        if (bank.ego_state != s) {
          throw ValidationError("bank " + state_spec.bank_path->string() +
                                " declares ego_state \"" +
                                std::string(to_string(bank.ego_state)) +
                                "\" but is mapped to " +
                                std::string(to_string(s)));
        }
        profile.memory_bank = std::make_shared<const MemoryBank>(std::move(bank));
      }
    }
  }
  return prepared;
}

// Runs one two-agent dialogue: 2 x turns_per_agent alternating turns, opener
// first. Each turn generates all three ego-state candidates, then the
// speaker's meta-decision picks the final utterance.
inline Transcript run_dialogue(const PreparedScenario& prepared,
                               std::uint64_t seed, GatewaySession& session) {
  Transcript transcript;
  transcript.scenario_id = prepared.config.scenario_id;
  transcript.condition = prepared.condition;
  transcript.seed = seed;

  bool memory_enabled = prepared.condition == Condition::memory_on;
  int total_turns = 2 * prepared.config.turns_per_agent;

  try {
    for (int t = 0; t < total_turns; ++t) {
      const AgentProfile& speaker = prepared.agents[t % 2];

      ConversationContext ctx;
      ctx.situation = prepared.config.situation;
      ctx.opener_name = prepared.config.opener;
      ctx.opening_line = prepared.config.opening_line;
      std::size_t window_start =
          transcript.turns.size() > kContextWindowTurns
              ? transcript.turns.size() - kContextWindowTurns
              : 0;
      ctx.history.assign(transcript.turns.begin() + window_start,
                         transcript.turns.end());

      Turn turn;
      turn.index = t;
      turn.speaker = speaker.agent_name;
      for (EgoState s : kAllEgoStates) {
        turn.candidates[state_index(s)] = generate_candidate(
            speaker.ego_state(s), ctx, memory_enabled, session);
      }
      SelectionOutcome outcome = decide(speaker, turn.candidates, ctx, session);
      turn.selected_state = outcome.selected_state;
      turn.addressed_state = outcome.addressed_state;
      turn.text = outcome.final_text;
      turn.fallback_used = outcome.fallback_used;
      transcript.turns.push_back(std::move(turn));
    }
  } catch (const BackendError& e) {
    throw DialogueError(e, std::move(transcript));
  }
  return transcript;
}

// Convenience matching the one-shot shape: loads banks with the backend's own
// embedder, opens a fresh session, runs.
inline Transcript run_dialogue(const ScenarioConfig& config, Condition condition,
                               std::uint64_t seed, const BackendConfig& backend) {
  GatewaySession session(effective_backend(backend, config), seed);
  PreparedScenario prepared =
      prepare_scenario(config, condition, session.embedder());
  return run_dialogue(prepared, seed, session);
}

}  // namespace tasim
