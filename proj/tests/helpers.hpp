#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tasim/conversation.hpp"
#include "tasim/core.hpp"
#include "tasim/gateway.hpp"
#include "tasim/memory.hpp"
#include "tasim/scenario.hpp"

namespace testutil {

inline std::filesystem::path repo_dir() { return TASIM_REPO_DIR; }

inline std::filesystem::path bundled_scenario_path() {
  return repo_dir() / "scenarios" / "taylor_john" / "scenario.json";
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tasim-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline tasim::BackendConfig scripted_backend(std::uint64_t seed = 0) {
  tasim::BackendConfig config;
  config.kind = tasim::BackendKind::scripted;
  config.seed = seed;
  return config;
}

inline tasim::BackendConfig scripted_backend(std::vector<std::string> script) {
  tasim::BackendConfig config;
  config.kind = tasim::BackendKind::scripted;
  config.script = std::move(script);
  return config;
}

// A compact two-agent scenario with tiny banks, written under dir.
inline tasim::ScenarioConfig write_test_scenario(
    const std::filesystem::path& dir, int turns_per_agent = 1) {
  std::filesystem::create_directories(dir / "banks");
  auto write_bank = [&](const std::string& name, tasim::EgoState state,
                        const std::string& prefix) {
    tasim::MemoryBank bank;
    bank.ego_state = state;
    for (int i = 0; i < 3; ++i) {
      tasim::MemoryItem item;
      item.id = prefix + "-" + std::to_string(i);
      item.context = prefix + " remembered situation number " + std::to_string(i);
      item.reaction = prefix + " reaction " + std::to_string(i);
      item.emotions = {"steady"};
      item.tone = prefix + " tone " + std::to_string(i);
      bank.items.push_back(std::move(item));
    }
    tasim::save_bank(bank, dir / "banks" / name);
  };

  nlohmann::json agents = nlohmann::json::array();
  for (const std::string& name : {std::string("Ada"), std::string("Ben")}) {
    nlohmann::json states = nlohmann::json::object();
    for (tasim::EgoState s : tasim::kAllEgoStates) {
      std::string key(tasim::to_string(s));
      std::string bank_file = tasim::slug(name) + "_" + key + ".json";
      write_bank(bank_file, s, tasim::slug(name) + "-" + key);
      states[key] = {
          {"system_prompt",
           "You are the " + key + " ego state of " + name + "."},
          {"memory_bank", "banks/" + bank_file}};
    }
    agents.push_back(
        {{"name", name},
         {"life_script",
          {{"name", name + " script"},
           {"text", "Life script of " + name + ": keep choosing the voice that fits."}}},
         {"ego_states", states}});
  }
  nlohmann::json doc = {
      {"scenario_id", "test-pair"},
      {"situation", "A brief check-in about a slipping deliverable."},
      {"opener", "Ada"},
      {"opening_line", "Ada opens the check-in and asks for status."},
      {"turns_per_agent", turns_per_agent},
      {"retrieval_k", 1},
      {"agents", agents}};
  std::ofstream out(dir / "scenario.json", std::ios::binary);
  out << doc.dump(2) << '\n';
  return tasim::load_scenario(dir / "scenario.json");
}

// Synthetic transcripts encoding the reported ego-state selection counts for
// the Taylor/John ablation: per agent and condition, 22 dialogues x 4 turns
// = 88 responses. Pinned cells: John child 10 (off) -> 15 (on), Taylor
// parent 8 (off) -> 18 (on). The remaining cells are fixture choices (the
// source material reports only the shifts), filled adult-heavy to match the
// professional-setting skew.
struct Fig5Counts {
  int parent;
  int adult;
  int child;
};

inline Fig5Counts fig5_counts(const std::string& agent, tasim::Condition c) {
  bool on = c == tasim::Condition::memory_on;
  if (agent == "Taylor") return on ? Fig5Counts{18, 55, 15} : Fig5Counts{8, 70, 10};
  return on ? Fig5Counts{8, 65, 15} : Fig5Counts{6, 72, 10};
}

inline std::vector<tasim::Transcript> make_fig5_transcripts(
    tasim::Condition condition) {
  const int dialogues = 22;
  const int turns_per_agent = 4;
  auto sequence = [&](const std::string& agent) {
    Fig5Counts counts = fig5_counts(agent, condition);
    std::vector<tasim::EgoState> seq;
    seq.insert(seq.end(), counts.parent, tasim::EgoState::parent);
    seq.insert(seq.end(), counts.adult, tasim::EgoState::adult);
    seq.insert(seq.end(), counts.child, tasim::EgoState::child);
    return seq;
  };
  std::vector<tasim::EgoState> taylor_seq = sequence("Taylor");
  std::vector<tasim::EgoState> john_seq = sequence("John");

  std::vector<tasim::Transcript> out;
  for (int d = 0; d < dialogues; ++d) {
    tasim::Transcript t;
    t.scenario_id = "fig5-fixture";
    t.condition = condition;
    t.seed = static_cast<std::uint64_t>(d);
    for (int turn_idx = 0; turn_idx < 2 * turns_per_agent; ++turn_idx) {
      bool taylor = turn_idx % 2 == 0;
      int own_turn = d * turns_per_agent + turn_idx / 2;
      tasim::Turn turn;
      turn.index = turn_idx;
      turn.speaker = taylor ? "Taylor" : "John";
      turn.selected_state = taylor ? taylor_seq[static_cast<std::size_t>(own_turn)]
                                   : john_seq[static_cast<std::size_t>(own_turn)];
      turn.addressed_state =
          tasim::kAllEgoStates[static_cast<std::size_t>(d + turn_idx) % 3];
      for (tasim::EgoState s : tasim::kAllEgoStates) {
        tasim::CandidateResponse c;
        c.source_state = s;
        c.text = "fixture " + turn.speaker + " d" + std::to_string(d) + " t" +
                 std::to_string(turn_idx) + " " + std::string(tasim::to_string(s));
        turn.candidates[tasim::state_index(s)] = std::move(c);
      }
      turn.text = turn.candidate(turn.selected_state).text;
      turn.fallback_used = false;
      t.turns.push_back(std::move(turn));
    }
    out.push_back(std::move(t));
  }
  return out;
}

// Random structures for round-trip checks. Strings mix ASCII with a few
// multi-byte UTF-8 sequences.
inline std::string random_text(std::mt19937_64& rng, std::size_t max_len = 40) {
  static const std::vector<std::string> pieces = {
      "a", "b", "z", "Q", "9", " ", ",", ".", "\"", "\\", "/", "\n",
      "report", "meeting", "deadline", "é", "ü", "日", "->"};
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  std::string out;
  std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) out += pieces[pick(rng)];
  return out;
}

inline tasim::MemoryItem random_item(std::mt19937_64& rng, int ordinal) {
  tasim::MemoryItem item;
  item.id = "id-" + std::to_string(ordinal);
  item.context = random_text(rng);
  item.reaction = random_text(rng);
  std::uniform_int_distribution<int> n_emotions(0, 3);
  int n = n_emotions(rng);
  for (int i = 0; i < n; ++i) item.emotions.push_back(random_text(rng, 10));
  item.tone = random_text(rng, 15);
  return item;
}

inline tasim::MemoryBank random_bank(std::mt19937_64& rng,
                                     std::size_t max_items = 10) {
  tasim::MemoryBank bank;
  bank.ego_state =
      tasim::kAllEgoStates[std::uniform_int_distribution<std::size_t>(0, 2)(rng)];
  std::uniform_int_distribution<std::size_t> n_items(0, max_items);
  std::size_t n = n_items(rng);
  for (std::size_t i = 0; i < n; ++i) {
    bank.items.push_back(random_item(rng, static_cast<int>(i)));
  }
  bank.index.reset();
  if (bank.items.empty()) bank.index = std::vector<tasim::EmbeddingVector>{};
  return bank;
}

inline tasim::Transcript random_transcript(std::mt19937_64& rng) {
  tasim::Transcript t;
  t.scenario_id = random_text(rng, 12);
  std::uniform_int_distribution<int> flip(0, 1);
  t.condition = flip(rng) ? tasim::Condition::memory_on
                          : tasim::Condition::memory_off;
  t.seed = rng();
  std::uniform_int_distribution<int> n_turns(0, 6);
  int turns = n_turns(rng);
  std::uniform_real_distribution<double> score(-1.0, 1.0);
  for (int i = 0; i < turns; ++i) {
    tasim::Turn turn;
    turn.index = i;
    turn.speaker = i % 2 == 0 ? "Ada" : "Ben";
    turn.selected_state =
        tasim::kAllEgoStates[std::uniform_int_distribution<std::size_t>(0, 2)(rng)];
    turn.addressed_state =
        tasim::kAllEgoStates[std::uniform_int_distribution<std::size_t>(0, 2)(rng)];
    turn.fallback_used = flip(rng) == 1;
    for (tasim::EgoState s : tasim::kAllEgoStates) {
      tasim::CandidateResponse c;
      c.source_state = s;
      c.text = random_text(rng);
      if (flip(rng)) c.query_used = random_text(rng, 20);
      if (flip(rng)) c.tone_hint = random_text(rng, 10);
      if (flip(rng)) {
        tasim::RetrievalResult r;
        r.item = random_item(rng, i);
        r.score = score(rng);
        c.retrieved.push_back(std::move(r));
      }
      turn.candidates[tasim::state_index(s)] = std::move(c);
    }
    turn.text = turn.candidate(turn.selected_state).text;
    t.turns.push_back(std::move(turn));
  }
  return t;
}

}  // namespace testutil
