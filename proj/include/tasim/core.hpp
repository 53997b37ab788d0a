#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tasim {

// The three ego states of Transactional Analysis: internalized rules and
// authority (parent), rational fact processing (adult), emotions and needs
// (child).
enum class EgoState { parent, adult, child };

inline constexpr std::array<EgoState, 3> kAllEgoStates = {
    EgoState::parent, EgoState::adult, EgoState::child};

inline std::string_view to_string(EgoState s) {
  switch (s) {
    case EgoState::parent: return "parent";
    case EgoState::adult: return "adult";
    case EgoState::child: return "child";
  }
  return "adult";
}

inline char state_letter(EgoState s) {
  switch (s) {
    case EgoState::parent: return 'P';
    case EgoState::adult: return 'A';
    case EgoState::child: return 'C';
  }
  return 'A';
}

inline constexpr std::size_t state_index(EgoState s) {
  return static_cast<std::size_t>(s);
}

// Whether ego-state sub-agents may retrieve from their memory banks.
enum class Condition { memory_off, memory_on };

inline constexpr std::array<Condition, 2> kAllConditions = {
    Condition::memory_off, Condition::memory_on};

inline std::string_view to_string(Condition c) {
  return c == Condition::memory_on ? "memory_on" : "memory_off";
}

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration or usage (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid scenario, bank, or transcript content (CLI exit code 1).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Model backend trouble: transport, endpoint rejection, exhausted script
// (CLI exit code 3).
class BackendError : public Error {
 public:
  enum class Kind { transport, status, protocol, script_exhausted };

  BackendError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Filesystem trouble (CLI exit code 3).
class IoError : public Error {
 public:
  using Error::Error;
};

inline EgoState parse_ego_state(std::string_view text) {
  if (text == "parent") return EgoState::parent;
  if (text == "adult") return EgoState::adult;
  if (text == "child") return EgoState::child;
  throw ValidationError("unknown ego_state label \"" + std::string(text) + "\"");
}

inline Condition parse_condition(std::string_view text) {
  if (text == "memory_on") return Condition::memory_on;
  if (text == "memory_off") return Condition::memory_off;
  throw ValidationError("unknown condition \"" + std::string(text) + "\"");
}

// FNV-1a, 64 bit. Stable across platforms; used by the scripted backend.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ b);
}

// Lowercased, filesystem-safe form of a name ("Taylor" -> "taylor").
inline std::string slug(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    if (c >= 'A' && c <= 'Z') {
      out.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      out.push_back(c);
    } else {
      out.push_back('-');
    }
  }
  return out;
}

}  // namespace tasim
