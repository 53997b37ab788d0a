#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tasim/agent.hpp"
#include "tasim/core.hpp"
#include "tasim/gateway.hpp"
#include "tasim/memory.hpp"

namespace tasim {

struct EgoStateSpec {
  std::string system_prompt;
  // Explicit null in the file means a memory-less state; paths resolve
  // relative to the scenario file.
  std::optional<std::filesystem::path> bank_path;
};

struct AgentSpec {
  std::string name;
  LifeScript life_script;
  std::array<EgoStateSpec, 3> ego_states;  // parent, adult, child
};

// The single human-editable document describing a two-agent scenario.
struct ScenarioConfig {
  std::string scenario_id;
  std::string situation;
  std::array<AgentSpec, 2> agents;
  std::string opener;
  std::string opening_line;
  int turns_per_agent = 4;
  std::size_t retrieval_k = 1;
  std::optional<double> min_score;
  std::optional<SamplingParams> sampling;  // overrides the backend default
};

// Scenario-level sampling settings take precedence over the backend default.
inline BackendConfig effective_backend(BackendConfig backend,
                                       const ScenarioConfig& scenario) {
  if (scenario.sampling.has_value()) backend.sampling = *scenario.sampling;
  return backend;
}

struct ScenarioValidation {
  std::optional<ScenarioConfig> config;
  std::vector<std::string> issues;

  bool ok() const { return issues.empty(); }
};

namespace detail {

inline void collect_unknown_fields(const nlohmann::json& obj,
                                   std::initializer_list<const char*> known,
                                   const std::string& where,
                                   std::vector<std::string>& issues) {
  for (const auto& [key, value] : obj.items()) {
    bool found = false;
    for (const char* field : known) {
      if (key == field) {
        found = true;
        break;
      }
    }
    if (!found) issues.push_back(where + ": unknown field \"" + key + "\"");
  }
}

inline std::string collect_string(const nlohmann::json& obj, const char* field,
                                  const std::string& where,
                                  std::vector<std::string>& issues,
                                  bool required_non_empty = true) {
  if (!obj.contains(field)) {
    issues.push_back(where + ": missing field \"" + field + "\"");
    return {};
  }
  if (!obj[field].is_string()) {
    issues.push_back(where + ": field \"" + field + "\" must be a string");
    return {};
  }
  std::string value = obj[field].get<std::string>();
  if (required_non_empty && value.empty()) {
    issues.push_back(where + ": field \"" + field + "\" must be non-empty");
  }
  return value;
}

}  // namespace detail

// Best-effort parse that keeps going after the first problem so a validate
// run can report everything at once.
inline ScenarioValidation parse_scenario(const nlohmann::json& doc,
                                         const std::filesystem::path& base_dir) {
  ScenarioValidation result;
  auto& issues = result.issues;
  if (!doc.is_object()) {
    issues.push_back("scenario: document must be an object");
    return result;
  }
  detail::collect_unknown_fields(
      doc,
      {"scenario_id", "situation", "agents", "opener", "opening_line",
       "turns_per_agent", "retrieval_k", "min_score", "sampling"},
      "scenario", issues);

  ScenarioConfig config;
  config.scenario_id =
      detail::collect_string(doc, "scenario_id", "scenario", issues);
  config.situation = detail::collect_string(doc, "situation", "scenario", issues);
  config.opener = detail::collect_string(doc, "opener", "scenario", issues);
  config.opening_line =
      detail::collect_string(doc, "opening_line", "scenario", issues);

  if (doc.contains("turns_per_agent")) {
    if (!doc["turns_per_agent"].is_number_integer() ||
        doc["turns_per_agent"].get<int>() < 1) {
      issues.push_back("scenario: field \"turns_per_agent\" must be a positive integer");
    } else {
      config.turns_per_agent = doc["turns_per_agent"].get<int>();
    }
  }
  if (doc.contains("retrieval_k")) {
    if (!doc["retrieval_k"].is_number_integer() ||
        doc["retrieval_k"].get<int>() < 1) {
      issues.push_back("scenario: field \"retrieval_k\" must be a positive integer");
    } else {
      config.retrieval_k = static_cast<std::size_t>(doc["retrieval_k"].get<int>());
    }
  }
  if (doc.contains("min_score") && !doc["min_score"].is_null()) {
    if (!doc["min_score"].is_number()) {
      issues.push_back("scenario: field \"min_score\" must be a number or null");
    } else {
      double v = doc["min_score"].get<double>();
      if (v < -1.0 || v > 1.0) {
        issues.push_back("scenario: field \"min_score\" must lie in [-1, 1]");
      } else {
        config.min_score = v;
      }
    }
  }
  if (doc.contains("sampling")) {
    const auto& s = doc["sampling"];
    if (!s.is_object()) {
      issues.push_back("scenario: field \"sampling\" must be an object");
    } else {
      detail::collect_unknown_fields(s, {"temperature", "max_tokens"},
                                     "sampling", issues);
      SamplingParams sampling;
      if (s.contains("temperature")) {
        if (!s["temperature"].is_number() || s["temperature"].get<double>() < 0) {
          issues.push_back("sampling: field \"temperature\" must be a number >= 0");
        } else {
          sampling.temperature = s["temperature"].get<double>();
        }
      }
      if (s.contains("max_tokens")) {
        if (!s["max_tokens"].is_number_integer() || s["max_tokens"].get<int>() < 1) {
          issues.push_back("sampling: field \"max_tokens\" must be a positive integer");
        } else {
          sampling.max_tokens = s["max_tokens"].get<int>();
        }
      }
      config.sampling = sampling;
    }
  }

  if (!doc.contains("agents") || !doc["agents"].is_array() ||
      doc["agents"].size() != 2) {
    issues.push_back("scenario: field \"agents\" must be an array of exactly 2 agents");
  } else {
    for (std::size_t a = 0; a < 2; ++a) {
      const auto& agent_json = doc["agents"][a];
      std::string where = "agents[" + std::to_string(a) + "]";
      AgentSpec& agent = config.agents[a];
      if (!agent_json.is_object()) {
        issues.push_back(where + ": must be an object");
        continue;
      }
      detail::collect_unknown_fields(agent_json,
                                     {"name", "life_script", "ego_states"},
                                     where, issues);
      agent.name = detail::collect_string(agent_json, "name", where, issues);
      if (!agent_json.contains("life_script") ||
          !agent_json["life_script"].is_object()) {
        issues.push_back(where + ": missing object field \"life_script\"");
      } else {
        const auto& ls = agent_json["life_script"];
        detail::collect_unknown_fields(ls, {"name", "text"},
                                       where + ".life_script", issues);
        agent.life_script.name =
            detail::collect_string(ls, "name", where + ".life_script", issues);
        agent.life_script.script_text =
            detail::collect_string(ls, "text", where + ".life_script", issues);
      }
      if (!agent_json.contains("ego_states") ||
          !agent_json["ego_states"].is_object()) {
        issues.push_back(where + ": missing object field \"ego_states\"");
        continue;
      }
      const auto& states = agent_json["ego_states"];
      detail::collect_unknown_fields(states, {"parent", "adult", "child"},
                                     where + ".ego_states", issues);
      for (EgoState s : kAllEgoStates) {
        std::string key(to_string(s));
        std::string swhere = where + ".ego_states." + key;
        if (!states.contains(key) || !states[key].is_object()) {
          issues.push_back(where + ".ego_states: missing object field \"" + key +
                           "\"");
          continue;
        }
        const auto& entry = states[key];
        detail::collect_unknown_fields(entry, {"system_prompt", "memory_bank"},
                                       swhere, issues);
        EgoStateSpec& spec = agent.ego_states[state_index(s)];
        spec.system_prompt =
            detail::collect_string(entry, "system_prompt", swhere, issues);
        if (!entry.contains("memory_bank")) {
          // Every (agent, state) pair must carry a bank path or an explicit
          // null; silence is treated as a mistake.
          issues.push_back(swhere +
                           ": field \"memory_bank\" must be a path or null");
        } else if (entry["memory_bank"].is_null()) {
          spec.bank_path.reset();
        } else if (entry["memory_bank"].is_string()) {
          std::filesystem::path p = entry["memory_bank"].get<std::string>();
          spec.bank_path = p.is_absolute() ? p : base_dir / p;
        } else {
          issues.push_back(swhere +
                           ": field \"memory_bank\" must be a path or null");
        }
      }
    }
    if (config.agents[0].name == config.agents[1].name &&
        !config.agents[0].name.empty()) {
      issues.push_back("scenario: agent names must be unique");
    }
    if (!config.opener.empty() && config.opener != config.agents[0].name &&
        config.opener != config.agents[1].name) {
      issues.push_back("scenario: field \"opener\" names no agent (\"" +
                       config.opener + "\")");
    }
  }

  if (issues.empty()) result.config = std::move(config);
  return result;
}

// Full validation: scenario structure plus every referenced memory bank.
inline std::vector<std::string> validate_scenario_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read scenario file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    return {std::string("scenario: invalid JSON: ") + e.what()};
  }
  ScenarioValidation v = parse_scenario(doc, path.parent_path());
  if (!v.config.has_value()) return v.issues;

  std::vector<std::string> issues = v.issues;
  for (std::size_t a = 0; a < 2; ++a) {
    const AgentSpec& agent = v.config->agents[a];
    for (EgoState s : kAllEgoStates) {
      const EgoStateSpec& spec = agent.ego_states[state_index(s)];
      if (!spec.bank_path.has_value()) continue;
      std::string where = agent.name + "/" + std::string(to_string(s));
      try {
        MemoryBank bank = load_bank(*spec.bank_path);
        if (bank.ego_state != s) {
          issues.push_back(where + ": bank " + spec.bank_path->string() +
                           " declares ego_state \"" +
                           std::string(to_string(bank.ego_state)) + "\"");
        }
      } catch (const Error& e) {
        issues.push_back(where + ": " + e.what());
      }
    }
  }
  return issues;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read scenario file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("scenario file " + path.string() + ": " + e.what());
  }
  ScenarioValidation v = parse_scenario(doc, path.parent_path());
  if (!v.config.has_value()) {
    std::string joined = "scenario file " + path.string() + " is invalid:";
    for (const std::string& issue : v.issues) joined += "\n  - " + issue;
    throw ValidationError(joined);
  }
  return *v.config;
}

}  // namespace tasim
