#pragma once

#include <array>
#include <optional>
#include <regex>
#include <string>
#include <utility>

#include "tasim/conversation.hpp"
#include "tasim/core.hpp"
#include "tasim/ego_state.hpp"
#include "tasim/gateway.hpp"

namespace tasim {

inline constexpr int kMaxSelectionAttempts = 3;

// The life script steering the meta-decision, e.g. "I Almost Make It".
struct LifeScript {
  std::string name;
  std::string script_text;
};

// One persona: a life script plus the three ego-state sub-agents, in fixed
// parent/adult/child order.
struct AgentProfile {
  std::string agent_name;
  LifeScript life_script;
  std::array<EgoStateProfile, 3> ego_states;

  const EgoStateProfile& ego_state(EgoState s) const {
    return ego_states[state_index(s)];
  }
};

struct SelectionOutcome {
  EgoState selected_state = EgoState::adult;
  std::string final_text;
  EgoState addressed_state = EgoState::adult;
  std::string rationale;
  bool fallback_used = false;
};

// Frozen selection instruction appended to the life script (golden-file
// tested). The machine-readable line is what parse_selection expects.
inline constexpr std::string_view kSelectionInstruction =
    "You choose which inner voice speaks next.\n"
    "Given the situation, the dialogue so far, and three candidate replies\n"
    "(one each from your parent, adult, and child ego states), pick the reply\n"
    "that best fits the life script above, and name the interlocutor ego\n"
    "state it addresses.\n"
    "Answer with exactly one line:\n"
    "SELECT=<parent|adult|child>; TARGET=<parent|adult|child>";

// Extracts the SELECT/TARGET labels, case-insensitively, from the first
// matching line; anything else is a parse error.
inline std::pair<EgoState, EgoState> parse_selection(const std::string& raw) {
  static const std::regex pattern(
      R"(SELECT\s*=\s*(parent|adult|child)\s*;\s*TARGET\s*=\s*(parent|adult|child))",
      std::regex::icase);
  std::smatch match;
  if (!std::regex_search(raw, match, pattern)) {
    throw ValidationError("no SELECT/TARGET line found");
  }
  std::string selected = match[1].str();
  std::string target = match[2].str();
  for (char& c : selected) c = static_cast<char>(std::tolower(c));
  for (char& c : target) c = static_cast<char>(std::tolower(c));
  return {parse_ego_state(selected), parse_ego_state(target)};
}

inline ChatRequest build_selection_request(
    const AgentProfile& agent, const std::array<CandidateResponse, 3>& candidates,
    const ConversationContext& ctx, SamplingParams sampling) {
  std::string system = agent.life_script.script_text;
  system += "\n\n";
  system += kSelectionInstruction;

  std::string user = render_context_block(ctx);
  user += "\nCANDIDATES:\n";
  for (EgoState s : kAllEgoStates) {
    const CandidateResponse& c = candidates[state_index(s)];
    std::string label(to_string(s));
    for (char& ch : label) ch = static_cast<char>(std::toupper(ch));
    user += label + ": " + c.text + "\n";
    if (c.tone_hint.has_value()) {
      user += "  tone hint: " + *c.tone_hint + "\n";
    }
  }
  return {std::move(system), {{"user", user}}, sampling};
}

// The meta-decision D: one chat call guided by the life script, retried up to
// 3 times while unparseable. It selects; it never rewrites. Persistent parse
// failure falls back to the adult candidate, flagged so analyses can exclude
// it.
inline SelectionOutcome decide(const AgentProfile& agent,
                               const std::array<CandidateResponse, 3>& candidates,
                               const ConversationContext& ctx,
                               GatewaySession& session) {
  for (EgoState s : kAllEgoStates) {
    const CandidateResponse& c = candidates[state_index(s)];
    if (c.source_state != s || c.text.empty()) {
      throw std::invalid_argument(
          "decide: expected one non-empty candidate per ego state");
    }
  }

  ChatRequest request = build_selection_request(agent, candidates, ctx,
                                                session.config().sampling);
  for (int attempt = 0; attempt < kMaxSelectionAttempts; ++attempt) {
    ChatResponse reply = session.complete_chat(request);
    try {
      auto [selected, target] = parse_selection(reply.text);
      SelectionOutcome out;
      out.selected_state = selected;
      out.addressed_state = target;
      out.final_text = candidates[state_index(selected)].text;
      out.rationale = reply.text;
      out.fallback_used = false;
      return out;
    } catch (const ValidationError&) {
      // unparseable; retry
    }
  }
  SelectionOutcome out;
  out.selected_state = EgoState::adult;
  out.addressed_state = EgoState::adult;
  out.final_text = candidates[state_index(EgoState::adult)].text;
  out.rationale = "fallback: unparseable selection after " +
                  std::to_string(kMaxSelectionAttempts) + " attempts";
  out.fallback_used = true;
  return out;
}

}  // namespace tasim
