#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <json.hpp>

#include "tasim/core.hpp"
#include "tasim/gateway.hpp"

namespace tasim {

// One remembered situation. `context` is the embedded key; reaction,
// emotions, and tone ride along as metadata.
struct MemoryItem {
  std::string id;
  std::string context;
  std::string reaction;
  std::vector<std::string> emotions;
  std::string tone;

  bool operator==(const MemoryItem&) const = default;
};

// Per-ego-state store. The index is a flat exact-scan structure parallel to
// `items`; it is not persisted and is rebuilt from the configured embedder.
struct MemoryBank {
  EgoState ego_state = EgoState::adult;
  std::vector<MemoryItem> items;
  std::optional<std::vector<EmbeddingVector>> index =
      std::vector<EmbeddingVector>{};

  bool indexed() const {
    return index.has_value() && index->size() == items.size();
  }
};

struct RetrievalResult {
  MemoryItem item;
  double score = 0.0;  // cosine similarity of query and item context

  bool operator==(const RetrievalResult&) const = default;
};

inline double cosine_similarity(const EmbeddingVector& a,
                                const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    throw ValidationError("cosine_similarity: dimension mismatch (" +
                          std::to_string(a.dimension()) + " vs " +
                          std::to_string(b.dimension()) + ")");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw ValidationError("cosine_similarity: zero-norm vector");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline void index_bank(MemoryBank& bank, const EmbedFn& embed) {
  std::vector<EmbeddingVector> index;
  index.reserve(bank.items.size());
  for (const MemoryItem& item : bank.items) index.push_back(embed(item.context));
  bank.index = std::move(index);
}

// Top-k by cosine similarity over the whole bank, best first; ties broken by
// ascending item id. Uses a bounded heap; the test suite checks it against a
// full-sort oracle.
inline std::vector<RetrievalResult> retrieve_top_k(
    const MemoryBank& bank, const std::string& query, std::size_t k,
    const EmbedFn& embed, std::optional<double> min_score = {}) {
  if (k == 0) throw ConfigError("retrieve_top_k: k must be >= 1");
  if (!bank.indexed()) {
    throw ValidationError("retrieve_top_k: bank is not indexed");
  }
  if (bank.items.empty()) return {};

  EmbeddingVector query_vec = embed(query);

  auto better = [&](std::size_t lhs, std::size_t rhs, double lhs_score,
                    double rhs_score) {
    if (lhs_score != rhs_score) return lhs_score > rhs_score;
    return bank.items[lhs].id < bank.items[rhs].id;
  };

  struct Entry {
    std::size_t idx;
    double score;
  };
  // Worst-of-the-best on top so it can be evicted.
  auto cmp = [&](const Entry& a, const Entry& b) {
    return better(a.idx, b.idx, a.score, b.score);
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> heap(cmp);

  for (std::size_t i = 0; i < bank.items.size(); ++i) {
    double score = cosine_similarity(query_vec, (*bank.index)[i]);
    if (min_score && score < *min_score) continue;
    if (heap.size() < k) {
      heap.push({i, score});
    } else if (better(i, heap.top().idx, score, heap.top().score)) {
      heap.pop();
      heap.push({i, score});
    }
  }

  std::vector<RetrievalResult> out;
  out.resize(heap.size());
  for (std::size_t slot = heap.size(); slot-- > 0;) {
    out[slot] = {bank.items[heap.top().idx], heap.top().score};
    heap.pop();
  }
  return out;
}

inline void add_memory(MemoryBank& bank, MemoryItem item, const EmbedFn& embed) {
  if (item.context.empty()) {
    throw ValidationError("add_memory: context must be non-empty");
  }
  for (const MemoryItem& existing : bank.items) {
    if (existing.id == item.id) {
      throw ValidationError("add_memory: duplicate id \"" + item.id + "\"");
    }
  }
  if (bank.index.has_value()) bank.index->push_back(embed(item.context));
  bank.items.push_back(std::move(item));
}

namespace detail {

inline void check_fields(const nlohmann::json& obj,
                         std::initializer_list<const char*> required,
                         const std::string& where) {
  for (const char* field : required) {
    if (!obj.contains(field)) {
      throw ValidationError(where + ": missing field \"" + field + "\"");
    }
  }
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* field : required) {
      if (key == field) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ValidationError(where + ": unknown field \"" + key + "\"");
    }
  }
}

inline std::string require_string(const nlohmann::json& obj, const char* field,
                                  const std::string& where) {
  if (!obj[field].is_string()) {
    throw ValidationError(where + ": field \"" + field + "\" must be a string");
  }
  return obj[field].get<std::string>();
}

}  // namespace detail

// Strict parse of the bank file format. Unknown fields are rejected;
// violations name the offending item ordinal and field.
inline MemoryBank bank_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("bank: document must be an object");
  detail::check_fields(doc, {"ego_state", "items"}, "bank");
  MemoryBank bank;
  bank.ego_state =
      parse_ego_state(detail::require_string(doc, "ego_state", "bank"));
  if (!doc["items"].is_array()) {
    throw ValidationError("bank: field \"items\" must be an array");
  }
  bank.index.reset();
  std::size_t ordinal = 0;
  for (const auto& entry : doc["items"]) {
    std::string where = "items[" + std::to_string(ordinal) + "]";
    if (!entry.is_object()) {
      throw ValidationError(where + ": must be an object");
    }
    detail::check_fields(entry, {"id", "context", "reaction", "emotions", "tone"},
                         where);
    MemoryItem item;
    item.id = detail::require_string(entry, "id", where);
    item.context = detail::require_string(entry, "context", where);
    item.reaction = detail::require_string(entry, "reaction", where);
    item.tone = detail::require_string(entry, "tone", where);
    if (!entry["emotions"].is_array()) {
      throw ValidationError(where +
                            ": field \"emotions\" must be an array of strings");
    }
    for (const auto& emotion : entry["emotions"]) {
      if (!emotion.is_string()) {
        throw ValidationError(
            where + ": field \"emotions\" must be an array of strings");
      }
      item.emotions.push_back(emotion.get<std::string>());
    }
    if (item.context.empty()) {
      throw ValidationError(where + ": field \"context\" must be non-empty");
    }
    for (std::size_t prior = 0; prior < bank.items.size(); ++prior) {
      if (bank.items[prior].id == item.id) {
        throw ValidationError("items[" + std::to_string(prior) + "] and items[" +
                              std::to_string(ordinal) + "]: duplicate id \"" +
                              item.id + "\"");
      }
    }
    bank.items.push_back(std::move(item));
    ++ordinal;
  }
  if (bank.items.empty()) bank.index = std::vector<EmbeddingVector>{};
  return bank;
}

inline nlohmann::json bank_to_json(const MemoryBank& bank) {
  nlohmann::json items = nlohmann::json::array();
  for (const MemoryItem& item : bank.items) {
    items.push_back({{"id", item.id},
                     {"context", item.context},
                     {"reaction", item.reaction},
                     {"emotions", item.emotions},
                     {"tone", item.tone}});
  }
  return {{"ego_state", std::string(to_string(bank.ego_state))},
          {"items", items}};
}

// Loads without an index; retrieval requires index_bank() (or the embedder
// overload below) first.
inline MemoryBank load_bank(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read bank file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bank file " + path.string() + ": " + e.what());
  }
  try {
    return bank_from_json(doc);
  } catch (const ValidationError& e) {
    throw ValidationError("bank file " + path.string() + ": " + e.what());
  }
}

inline MemoryBank load_bank(const std::filesystem::path& path,
                            const EmbedFn& embed) {
  MemoryBank bank = load_bank(path);
  index_bank(bank, embed);
  return bank;
}

inline void save_bank(const MemoryBank& bank,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write bank file " + path.string());
  out << bank_to_json(bank).dump(2) << '\n';
  if (!out) throw IoError("failed writing bank file " + path.string());
}

}  // namespace tasim
