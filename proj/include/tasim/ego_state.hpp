#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tasim/conversation.hpp"
#include "tasim/core.hpp"
#include "tasim/gateway.hpp"
#include "tasim/memory.hpp"

namespace tasim {

// Dialogue window handed to each sub-agent: the situation line plus the last
// 8 turns verbatim (covers a full default dialogue of 4 turns per agent).
inline constexpr std::size_t kContextWindowTurns = 8;

// Per-candidate chat budget for the bounded reason-then-act cycle: at most
// one retrieval step and at most 3 chat calls.
inline constexpr int kMaxChatCallsPerCandidate = 3;

// One ego-state sub-agent: its persona prompt and (optionally) its memory
// bank. Banks are shared read-only across concurrent dialogues.
struct EgoStateProfile {
  EgoState state = EgoState::adult;
  std::string system_prompt;
  std::shared_ptr<const MemoryBank> memory_bank;
  std::size_t retrieval_k = 1;
  std::optional<double> min_score;
};

// --- Prompt assembly -------------------------------------------------------
//
// The assembled prompt is frozen by golden-file tests (tests/golden/). The
// layout, in order: persona prompt (system), RELEVANT MEMORY block when
// retrieval happened, situation and dialogue window, and the one-utterance
// instruction.

inline std::string render_context_block(const ConversationContext& ctx) {
  std::string out = "SITUATION: " + ctx.situation + "\n";
  out += "OPENING (" + ctx.opener_name + "): " + ctx.opening_line + "\n";
  out += "\nDIALOGUE SO FAR:\n";
  if (ctx.history.empty()) {
    out += "- (none yet)\n";
  } else {
    for (const Turn& turn : ctx.history) {
      out += "- " + turn.speaker + ": " + turn.text + "\n";
    }
  }
  return out;
}

inline std::string render_memory_block(
    const std::vector<RetrievalResult>& retrieved) {
  std::string out = "RELEVANT MEMORY:\n<<<\n";
  std::size_t n = 1;
  for (const RetrievalResult& r : retrieved) {
    out += "[" + std::to_string(n++) + "] context: " + r.item.context + "\n";
    out += "    reaction: " + r.item.reaction + "\n";
    out += "    emotions: ";
    for (std::size_t i = 0; i < r.item.emotions.size(); ++i) {
      if (i > 0) out += ", ";
      out += r.item.emotions[i];
    }
    out += "\n";
    out += "    tone: " + r.item.tone + "\n";
  }
  out += ">>>\n";
  return out;
}

inline ChatRequest build_candidate_request(
    const EgoStateProfile& profile, const ConversationContext& ctx,
    const std::vector<RetrievalResult>& retrieved, SamplingParams sampling) {
  std::string user;
  if (!retrieved.empty()) {
    user += render_memory_block(retrieved);
    user += "\n";
  }
  user += render_context_block(ctx);
  user += "\nRespond as the ";
  user += to_string(profile.state);
  user += " ego state in one utterance.";
  return {profile.system_prompt, {{"user", user}}, sampling};
}

// --- Memory query ----------------------------------------------------------

// On the opening turn the query is the situation line itself. Afterwards the
// scripted backend uses the deterministic template "recall: <last utterance>".
// The http backend asks the model to phrase the query (tool-style); an
// unusable reply falls back to the template.
inline std::string formulate_query(const EgoStateProfile& profile,
                                   const ConversationContext& ctx,
                                   GatewaySession& session) {
  if (ctx.history.empty()) return ctx.situation;
  const std::string& last = ctx.history.back().text;
  std::string fallback = "recall: " + last;
  if (session.config().kind == BackendKind::scripted) return fallback;

  std::string user = render_context_block(ctx);
  user +=
      "\nYou may recall one past situation from your memory before replying. "
      "Answer with one line \"QUERY: <what to recall>\" (at most 200 "
      "characters), or \"NONE\" if nothing is worth recalling.";
  ChatResponse reply = session.complete_chat(
      {profile.system_prompt, {{"user", user}}, session.config().sampling});
  auto pos = reply.text.find("QUERY:");
  if (pos == std::string::npos) return fallback;
  std::string query = reply.text.substr(pos + 6);
  auto eol = query.find('\n');
  if (eol != std::string::npos) query.resize(eol);
  while (!query.empty() && (query.front() == ' ' || query.front() == '\t')) {
    query.erase(query.begin());
  }
  while (!query.empty() && (query.back() == ' ' || query.back() == '\r')) {
    query.pop_back();
  }
  if (query.empty()) return fallback;
  if (query.size() > 200) query.resize(200);
  return query;
}

// --- Candidate generation --------------------------------------------------

// Generates r_i for one ego state. With memory enabled and a non-empty bank:
// formulate query, retrieve top-k, render the memory block, one chat call.
// Disabled or bank-less sub-agents make zero embedding and zero retrieval
// calls. Empty model output is regenerated within the chat budget.
inline CandidateResponse generate_candidate(const EgoStateProfile& profile,
                                            const ConversationContext& ctx,
                                            bool memory_enabled,
                                            GatewaySession& session) {
  if (profile.system_prompt.empty()) {
    throw ConfigError("generate_candidate: system_prompt must be non-empty");
  }
  CandidateResponse out;
  out.source_state = profile.state;

  int calls_left = kMaxChatCallsPerCandidate;
  bool use_memory = memory_enabled && profile.memory_bank != nullptr &&
                    !profile.memory_bank->items.empty();
  if (use_memory) {
    if (!profile.memory_bank->indexed()) {
      throw ValidationError("generate_candidate: memory bank is not indexed");
    }
    if (session.config().kind == BackendKind::http && !ctx.history.empty()) {
      --calls_left;  // the query call comes out of the candidate budget
    }
    std::string query = formulate_query(profile, ctx, session);
    out.retrieved = retrieve_top_k(*profile.memory_bank, query,
                                   profile.retrieval_k, session.embedder(),
                                   profile.min_score);
    session.note_retrieval();
    out.query_used = std::move(query);
    if (!out.retrieved.empty() && !out.retrieved.front().item.tone.empty()) {
      out.tone_hint = out.retrieved.front().item.tone;
    }
  }

  ChatRequest request = build_candidate_request(profile, ctx, out.retrieved,
                                                session.config().sampling);
  int attempts = 0;
  while (calls_left-- > 0) {
    ++attempts;
    ChatResponse reply = session.complete_chat(request);
    if (!reply.text.empty()) {
      out.text = reply.text;
      return out;
    }
  }
  throw BackendError(BackendError::Kind::protocol,
                     "model returned empty output after " +
                         std::to_string(attempts) + " attempts");
}

}  // namespace tasim
