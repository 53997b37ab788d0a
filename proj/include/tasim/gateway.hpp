#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "tasim/core.hpp"

namespace tasim {

enum class BackendKind { http, scripted };

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatMessage {
  std::string role;  // "user" or "assistant"
  std::string text;
};

struct SamplingParams {
  double temperature = 0.7;
  int max_tokens = 256;
};

// Houses the persona prompt and conversational context as delivered to the
// model.
struct ChatRequest {
  std::string system_prompt;
  std::vector<ChatMessage> messages;
  SamplingParams sampling;
};

struct ChatResponse {
  std::string text;
  std::string backend_id;
  std::optional<TokenUsage> usage;
};

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }

  double l2_norm() const {
    double acc = 0.0;
    for (double v : values) acc += v * v;
    return std::sqrt(acc);
  }

  bool operator==(const EmbeddingVector&) const = default;
};

using EmbedFn = std::function<EmbeddingVector(const std::string&)>;

struct BackendConfig {
  BackendKind kind = BackendKind::scripted;
  std::string endpoint_url;    // http only, e.g. "http://localhost:8080/v1"
  std::string api_key_env;     // http only; name of the env var, may be empty
  std::string model_name = "scripted";
  std::vector<std::string> script;      // scripted: canned replies, in order
  std::optional<std::uint64_t> seed;    // scripted: seed-derived replies
  std::size_t embedding_dim = 256;      // scripted embedder output width
  SamplingParams sampling;
  int transport_retries = 2;            // retries on transport failure only
  std::chrono::milliseconds retry_backoff{250};
};

inline void validate_config(const BackendConfig& config) {
  if (config.kind == BackendKind::http && config.endpoint_url.empty()) {
    throw ConfigError("http backend requires endpoint_url");
  }
  if (config.kind == BackendKind::scripted && config.script.empty() &&
      !config.seed.has_value()) {
    throw ConfigError("scripted backend requires a script or a seed");
  }
  if (config.embedding_dim == 0) {
    throw ConfigError("embedding_dim must be positive");
  }
}

// Deterministic stand-in for a real embedding model: tokens are lowercased
// alphanumeric runs, each hashed into one of `dim` buckets, counts
// L2-normalized. Same text always maps to the same unit vector, and shared
// tokens produce overlap-driven similarity.
inline EmbeddingVector scripted_embedding(std::string_view text,
                                          std::size_t dim) {
  EmbeddingVector out;
  out.values.assign(dim, 0.0);
  std::string token;
  bool any = false;
  auto flush = [&] {
    if (token.empty()) return;
    out.values[fnv1a64(token) % dim] += 1.0;
    token.clear();
    any = true;
  };
  for (char c : text) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      token.push_back(c);
    } else if (c >= 'A' && c <= 'Z') {
      token.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      flush();
    }
  }
  flush();
  if (!any) {
    // No alphanumeric content; fall back to hashing the raw bytes so the
    // result is still a unit vector.
    out.values[fnv1a64(text) % dim] += 1.0;
  }
  double norm = out.l2_norm();
  for (double& v : out.values) v /= norm;
  return out;
}

struct CounterSnapshot {
  std::uint64_t chat_calls = 0;
  std::uint64_t embed_calls = 0;
  std::uint64_t retrievals = 0;

  CounterSnapshot& operator+=(const CounterSnapshot& o) {
    chat_calls += o.chat_calls;
    embed_calls += o.embed_calls;
    retrievals += o.retrievals;
    return *this;
  }
};

namespace detail {

// Canonical byte string for hashing a chat request.
inline std::string request_fingerprint(const ChatRequest& request) {
  std::string buf = request.system_prompt;
  for (const ChatMessage& m : request.messages) {
    buf.push_back('\x1e');
    buf += m.role;
    buf.push_back('\x1f');
    buf += m.text;
  }
  return buf;
}

struct Lexicon {
  std::array<std::string_view, 8> lead;
  std::array<std::string_view, 8> body;
};

inline const Lexicon& lexicon_for(EgoState state) {
  static const Lexicon parent{
      {"We agreed on this.", "This is exactly what I warned about.",
       "Deadlines are commitments.", "I expected better discipline here.",
       "Standards exist for a reason.", "This was due on Friday.",
       "Accountability matters on this team.",
       "I should not have to chase updates."},
      {"I need it finished today.", "Walk me through what you will fix.",
       "I want a firm plan before lunch.", "Show me exactly where it stands.",
       "No more slipping timelines.", "This cannot happen again.",
       "Own the delay and correct it.", "Get it done properly this time."}};
  static const Lexicon adult{
      {"Let's look at the facts.", "Here is where things stand.",
       "Let's keep this practical.", "Reviewing the current status,",
       "Based on what we know,", "To move this forward,",
       "Let's break the work down.", "Taking stock for a moment,"},
      {"the data pass is the remaining blocker.",
       "we can re-scope what ships today.",
       "I suggest a checkpoint at noon.",
       "the draft covers two of the three sections.",
       "we should confirm what is actually blocking.",
       "a revised estimate is the next step.",
       "let's list the open items and owners.",
       "we can have a reviewed version by tomorrow."}};
  static const Lexicon child{
      {"Honestly, I'm overwhelmed.", "I know, I know.",
       "This is a lot right now.", "I really did try.",
       "I hate letting people down.", "Please bear with me.",
       "I'm worried this looks bad.", "It feels like nothing I do is enough."},
      {"I just need a little more time.", "I promise it's almost there.",
       "Can we not make this a big thing?", "I'll stay late and finish it.",
       "I didn't want to disappoint anyone.", "I keep freezing up about it.",
       "Just give me until tonight.", "I'm doing my best here."}};
  switch (state) {
    case EgoState::parent: return parent;
    case EgoState::adult: return adult;
    case EgoState::child: return child;
  }
  return adult;
}

inline const Lexicon& generic_lexicon() {
  static const Lexicon generic{
      {"Understood.", "Noted.", "Alright.", "Fair enough.", "Okay.",
       "Right.", "Sure.", "Got it."},
      {"Let's continue.", "I hear you.", "Let's take the next step.",
       "We can work with that.", "That makes sense.", "Let's keep going.",
       "I'll keep that in mind.", "Let's see where this goes."}};
  return generic;
}

}  // namespace detail

// One backend session. Holds the scripted reply cursor and the
// instrumentation counters; scope one session per dialogue run so cursors
// never leak across conversations. Counters are atomic, so a session can be
// observed while a run is in flight.
class GatewaySession {
 public:
  explicit GatewaySession(BackendConfig config, std::uint64_t session_seed = 0)
      : config_(std::move(config)),
        seed_mix_(mix_seed(config_.seed.value_or(0), session_seed)) {
    validate_config(config_);
  }

  const BackendConfig& config() const { return config_; }

  ChatResponse complete_chat(const ChatRequest& request) {
    chat_calls_.fetch_add(1, std::memory_order_relaxed);
    if (capture_.load(std::memory_order_relaxed)) {
      std::lock_guard lock(mutex_);
      captured_.push_back(request);
    }
    if (config_.kind == BackendKind::scripted) return scripted_chat(request);
    return http_chat(request);
  }

  EmbeddingVector embed_text(const std::string& text) {
    if (text.empty()) throw ConfigError("embed_text: text must be non-empty");
    embed_calls_.fetch_add(1, std::memory_order_relaxed);
    if (config_.kind == BackendKind::scripted) {
      return scripted_embedding(text, config_.embedding_dim);
    }
    return http_embed(text);
  }

  // Instrumentation hook: callers record each memory retrieval they perform.
  void note_retrieval() { retrievals_.fetch_add(1, std::memory_order_relaxed); }

  CounterSnapshot counters() const {
    return {chat_calls_.load(), embed_calls_.load(), retrievals_.load()};
  }

  void capture_requests(bool on) { capture_.store(on); }

  std::vector<ChatRequest> captured_requests() const {
    std::lock_guard lock(mutex_);
    return captured_;
  }

  // Embedding function bound to this session, with call counting.
  EmbedFn embedder() {
    return [this](const std::string& text) { return embed_text(text); };
  }

 private:
  ChatResponse scripted_chat(const ChatRequest& request) {
    if (!config_.script.empty()) {
      std::lock_guard lock(mutex_);
      if (cursor_ >= config_.script.size()) {
        throw BackendError(BackendError::Kind::script_exhausted,
                           "scripted backend exhausted after " +
                               std::to_string(config_.script.size()) +
                               " replies");
      }
      return {config_.script[cursor_++], "scripted:" + config_.model_name, {}};
    }
    // Seed-derived reply: a pure function of (seed, request). The scripted
    // backend is protocol-aware so offline runs exercise the full pipeline:
    // selection prompts get a parseable SELECT/TARGET line, candidate prompts
    // get an utterance flavored by the requested ego state.
    std::uint64_t h =
        mix_seed(seed_mix_, fnv1a64(detail::request_fingerprint(request)));
    std::string body;
    for (const ChatMessage& m : request.messages) {
      body += m.text;
      body.push_back('\n');
    }
    if (request.system_prompt.find("SELECT=") != std::string::npos) {
      EgoState selected = kAllEgoStates[h % 3];
      EgoState target = kAllEgoStates[(h >> 8) % 3];
      std::string line = "SELECT=";
      line += to_string(selected);
      line += "; TARGET=";
      line += to_string(target);
      return {line, "scripted:" + config_.model_name, {}};
    }
    const detail::Lexicon* lex = &detail::generic_lexicon();
    for (EgoState s : kAllEgoStates) {
      std::string marker = "Respond as the ";
      marker += to_string(s);
      marker += " ego state";
      if (body.find(marker) != std::string::npos) {
        lex = &detail::lexicon_for(s);
        break;
      }
    }
    std::string text(lex->lead[(h >> 16) % 8]);
    text += ' ';
    text += lex->body[(h >> 32) % 8];
    return {text, "scripted:" + config_.model_name, {}};
  }

  std::string api_key() const {
    if (config_.api_key_env.empty()) return {};
    const char* value = std::getenv(config_.api_key_env.c_str());
    if (value == nullptr || *value == '\0') {
      throw ConfigError("environment variable " + config_.api_key_env +
                        " is not set");
    }
    return value;
  }

  // Splits "http://host:port/prefix" into client base and path prefix.
  static std::pair<std::string, std::string> split_endpoint(
      const std::string& url) {
    auto scheme_end = url.find("://");
    std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = url.find('/', host_start);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
  }

  nlohmann::json http_post(const std::string& path, const nlohmann::json& body) {
    auto [base, prefix] = split_endpoint(config_.endpoint_url);
    httplib::Client client(base);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(std::chrono::seconds(120));
    httplib::Headers headers;
    std::string key = api_key();
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);

    std::string payload = body.dump();
    for (int attempt = 0;; ++attempt) {
      auto res = client.Post(prefix + path, headers, payload, "application/json");
      if (res) {
        if (res->status < 200 || res->status >= 300) {
          throw BackendError(BackendError::Kind::status,
                             "endpoint rejected " + path + " with status " +
                                 std::to_string(res->status));
        }
        try {
          return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
          throw BackendError(BackendError::Kind::protocol,
                             std::string("unparseable response body: ") +
                                 e.what());
        }
      }
      if (attempt >= config_.transport_retries) {
        throw BackendError(BackendError::Kind::transport,
                           "transport failure on " + path + ": " +
                               httplib::to_string(res.error()));
      }
      std::this_thread::sleep_for(config_.retry_backoff * (1 << attempt));
    }
  }

  ChatResponse http_chat(const ChatRequest& request) {
    nlohmann::json messages = nlohmann::json::array();
    if (!request.system_prompt.empty()) {
      messages.push_back(
          {{"role", "system"}, {"content", request.system_prompt}});
    }
    for (const ChatMessage& m : request.messages) {
      messages.push_back({{"role", m.role}, {"content", m.text}});
    }
    nlohmann::json body = {{"model", config_.model_name},
                           {"messages", messages},
                           {"temperature", request.sampling.temperature},
                           {"max_tokens", request.sampling.max_tokens}};
    nlohmann::json reply = http_post("/chat/completions", body);
    if (!reply.contains("choices") || reply["choices"].empty() ||
        !reply["choices"][0].contains("message")) {
      throw BackendError(BackendError::Kind::protocol,
                         "chat response carries no choices");
    }
    ChatResponse out;
    out.text = reply["choices"][0]["message"].value("content", "");
    out.backend_id = "http:" + config_.model_name;
    if (reply.contains("usage") && reply["usage"].is_object()) {
      TokenUsage usage;
      usage.prompt_tokens = reply["usage"].value("prompt_tokens", 0);
      usage.completion_tokens = reply["usage"].value("completion_tokens", 0);
      out.usage = usage;
    }
    return out;
  }

  EmbeddingVector http_embed(const std::string& text) {
    nlohmann::json body = {{"model", config_.model_name}, {"input", text}};
    nlohmann::json reply = http_post("/embeddings", body);
    if (!reply.contains("data") || reply["data"].empty() ||
        !reply["data"][0].contains("embedding")) {
      throw BackendError(BackendError::Kind::protocol,
                         "embedding response carries no data");
    }
    EmbeddingVector out;
    for (const auto& v : reply["data"][0]["embedding"]) {
      out.values.push_back(v.get<double>());
    }
    std::lock_guard lock(mutex_);
    if (http_embed_dim_ == 0) {
      http_embed_dim_ = out.dimension();
    } else if (http_embed_dim_ != out.dimension()) {
      throw BackendError(BackendError::Kind::protocol,
                         "embedding dimension changed mid-session");
    }
    for (double v : out.values) {
      if (!std::isfinite(v)) {
        throw BackendError(BackendError::Kind::protocol,
                           "embedding contains non-finite values");
      }
    }
    return out;
  }

  BackendConfig config_;
  std::uint64_t seed_mix_;
  std::size_t cursor_ = 0;
  std::size_t http_embed_dim_ = 0;
  mutable std::mutex mutex_;
  std::atomic<std::uint64_t> chat_calls_{0};
  std::atomic<std::uint64_t> embed_calls_{0};
  std::atomic<std::uint64_t> retrievals_{0};
  std::atomic<bool> capture_{false};
  std::vector<ChatRequest> captured_;
};

// One-shot conveniences over a fresh session.
inline ChatResponse complete_chat(const BackendConfig& config,
                                  const ChatRequest& request) {
  GatewaySession session(config);
  return session.complete_chat(request);
}

inline EmbeddingVector embed_text(const BackendConfig& config,
                                  const std::string& text) {
  GatewaySession session(config);
  return session.embed_text(text);
}

}  // namespace tasim
