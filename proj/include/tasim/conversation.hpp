#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tasim/core.hpp"
#include "tasim/memory.hpp"

namespace tasim {

// One ego state's proposed utterance, with its retrieval trace.
struct CandidateResponse {
  EgoState source_state = EgoState::adult;
  std::string text;
  std::optional<std::string> query_used;
  std::vector<RetrievalResult> retrieved;
  std::optional<std::string> tone_hint;

  bool operator==(const CandidateResponse&) const = default;
};

struct Turn {
  int index = 0;
  std::string speaker;
  std::string text;
  EgoState selected_state = EgoState::adult;
  EgoState addressed_state = EgoState::adult;
  // Fixed order: parent, adult, child.
  std::array<CandidateResponse, 3> candidates;
  bool fallback_used = false;

  const CandidateResponse& candidate(EgoState s) const {
    return candidates[state_index(s)];
  }

  bool operator==(const Turn&) const = default;
};

struct Transcript {
  std::string scenario_id;
  Condition condition = Condition::memory_off;
  std::uint64_t seed = 0;
  std::vector<Turn> turns;

  bool operator==(const Transcript&) const = default;
};

// What one generation step sees: the scenario setting plus a windowed view of
// the dialogue (windowing is applied by the dialogue engine).
struct ConversationContext {
  std::string situation;
  std::string opener_name;
  std::string opening_line;
  std::vector<Turn> history;
};

namespace detail {

inline nlohmann::json optional_string_json(const std::optional<std::string>& v) {
  if (v.has_value()) return *v;
  return nullptr;
}

inline std::optional<std::string> optional_string_from(
    const nlohmann::json& j, const std::string& where) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_string()) {
    throw ValidationError(where + ": must be a string or null");
  }
  return j.get<std::string>();
}

}  // namespace detail

inline nlohmann::json candidate_to_json(const CandidateResponse& c) {
  nlohmann::json retrieved = nlohmann::json::array();
  for (const RetrievalResult& r : c.retrieved) {
    retrieved.push_back({{"item",
                          {{"id", r.item.id},
                           {"context", r.item.context},
                           {"reaction", r.item.reaction},
                           {"emotions", r.item.emotions},
                           {"tone", r.item.tone}}},
                         {"score", r.score}});
  }
  return {{"source_state", std::string(to_string(c.source_state))},
          {"text", c.text},
          {"query_used", detail::optional_string_json(c.query_used)},
          {"retrieved", retrieved},
          {"tone_hint", detail::optional_string_json(c.tone_hint)}};
}

inline CandidateResponse candidate_from_json(const nlohmann::json& j,
                                             const std::string& where) {
  detail::check_fields(
      j, {"source_state", "text", "query_used", "retrieved", "tone_hint"},
      where);
  CandidateResponse c;
  c.source_state =
      parse_ego_state(detail::require_string(j, "source_state", where));
  c.text = detail::require_string(j, "text", where);
  c.query_used = detail::optional_string_from(j["query_used"], where + ".query_used");
  c.tone_hint = detail::optional_string_from(j["tone_hint"], where + ".tone_hint");
  if (!j["retrieved"].is_array()) {
    throw ValidationError(where + ": field \"retrieved\" must be an array");
  }
  std::size_t ordinal = 0;
  for (const auto& entry : j["retrieved"]) {
    std::string rwhere = where + ".retrieved[" + std::to_string(ordinal) + "]";
    detail::check_fields(entry, {"item", "score"}, rwhere);
    if (!entry["score"].is_number()) {
      throw ValidationError(rwhere + ": field \"score\" must be a number");
    }
    const auto& item_json = entry["item"];
    detail::check_fields(item_json, {"id", "context", "reaction", "emotions", "tone"},
                         rwhere + ".item");
    RetrievalResult r;
    r.score = entry["score"].get<double>();
    r.item.id = detail::require_string(item_json, "id", rwhere + ".item");
    r.item.context = detail::require_string(item_json, "context", rwhere + ".item");
    r.item.reaction = detail::require_string(item_json, "reaction", rwhere + ".item");
    r.item.tone = detail::require_string(item_json, "tone", rwhere + ".item");
    if (!item_json["emotions"].is_array()) {
      throw ValidationError(rwhere + ".item: field \"emotions\" must be an array");
    }
    for (const auto& emotion : item_json["emotions"]) {
      if (!emotion.is_string()) {
        throw ValidationError(rwhere +
                              ".item: field \"emotions\" must be an array of strings");
      }
      r.item.emotions.push_back(emotion.get<std::string>());
    }
    c.retrieved.push_back(std::move(r));
    ++ordinal;
  }
  return c;
}

inline nlohmann::json turn_to_json(const Turn& t) {
  nlohmann::json candidates = nlohmann::json::array();
  for (const CandidateResponse& c : t.candidates) {
    candidates.push_back(candidate_to_json(c));
  }
  return {{"index", t.index},
          {"speaker", t.speaker},
          {"text", t.text},
          {"selected_state", std::string(to_string(t.selected_state))},
          {"addressed_state", std::string(to_string(t.addressed_state))},
          {"candidates", candidates},
          {"fallback_used", t.fallback_used}};
}

inline Turn turn_from_json(const nlohmann::json& j, const std::string& where) {
  detail::check_fields(j,
                       {"index", "speaker", "text", "selected_state",
                        "addressed_state", "candidates", "fallback_used"},
                       where);
  Turn t;
  if (!j["index"].is_number_integer()) {
    throw ValidationError(where + ": field \"index\" must be an integer");
  }
  t.index = j["index"].get<int>();
  t.speaker = detail::require_string(j, "speaker", where);
  t.text = detail::require_string(j, "text", where);
  t.selected_state =
      parse_ego_state(detail::require_string(j, "selected_state", where));
  t.addressed_state =
      parse_ego_state(detail::require_string(j, "addressed_state", where));
  if (!j["fallback_used"].is_boolean()) {
    throw ValidationError(where + ": field \"fallback_used\" must be a boolean");
  }
  t.fallback_used = j["fallback_used"].get<bool>();
  if (!j["candidates"].is_array() || j["candidates"].size() != 3) {
    throw ValidationError(where + ": field \"candidates\" must hold 3 entries");
  }
  std::array<bool, 3> seen{false, false, false};
  std::size_t ordinal = 0;
  for (const auto& entry : j["candidates"]) {
    CandidateResponse c = candidate_from_json(
        entry, where + ".candidates[" + std::to_string(ordinal) + "]");
    std::size_t slot = state_index(c.source_state);
    if (seen[slot]) {
      throw ValidationError(where + ": duplicate candidate for state " +
                            std::string(to_string(c.source_state)));
    }
    seen[slot] = true;
    t.candidates[slot] = std::move(c);
    ++ordinal;
  }
  return t;
}

inline nlohmann::json transcript_to_json(const Transcript& t) {
  nlohmann::json turns = nlohmann::json::array();
  for (const Turn& turn : t.turns) turns.push_back(turn_to_json(turn));
  return {{"scenario_id", t.scenario_id},
          {"condition", std::string(to_string(t.condition))},
          {"seed", t.seed},
          {"turns", turns}};
}

inline Transcript transcript_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    throw ValidationError("transcript: document must be an object");
  }
  detail::check_fields(doc, {"scenario_id", "condition", "seed", "turns"},
                       "transcript");
  Transcript t;
  t.scenario_id = detail::require_string(doc, "scenario_id", "transcript");
  t.condition =
      parse_condition(detail::require_string(doc, "condition", "transcript"));
  if (!doc["seed"].is_number_unsigned() && !doc["seed"].is_number_integer()) {
    throw ValidationError("transcript: field \"seed\" must be an integer");
  }
  t.seed = doc["seed"].get<std::uint64_t>();
  if (!doc["turns"].is_array()) {
    throw ValidationError("transcript: field \"turns\" must be an array");
  }
  std::size_t ordinal = 0;
  for (const auto& entry : doc["turns"]) {
    t.turns.push_back(
        turn_from_json(entry, "turns[" + std::to_string(ordinal) + "]"));
    ++ordinal;
  }
  return t;
}

inline std::string serialize_transcript(const Transcript& t) {
  return transcript_to_json(t).dump(2) + "\n";
}

inline Transcript load_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read transcript " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("transcript " + path.string() + ": " + e.what());
  }
  try {
    return transcript_from_json(doc);
  } catch (const ValidationError& e) {
    throw ValidationError("transcript " + path.string() + ": " + e.what());
  }
}

inline void save_transcript(const Transcript& t,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write transcript " + path.string());
  out << serialize_transcript(t);
  if (!out) throw IoError("failed writing transcript " + path.string());
}

// The meta-decision selects, it never rewrites: every final utterance must be
// byte-identical to one of that turn's candidates. Returns one message per
// violating turn.
inline std::vector<std::string> selection_purity_violations(
    const Transcript& t) {
  std::vector<std::string> out;
  for (const Turn& turn : t.turns) {
    bool matches = false;
    for (const CandidateResponse& c : turn.candidates) {
      if (c.text == turn.text) {
        matches = true;
        break;
      }
    }
    if (!matches) {
      out.push_back("turn " + std::to_string(turn.index) +
                    ": final text matches no candidate");
    }
    if (turn.text != turn.candidate(turn.selected_state).text) {
      out.push_back("turn " + std::to_string(turn.index) +
                    ": final text differs from the selected candidate");
    }
  }
  return out;
}

}  // namespace tasim
