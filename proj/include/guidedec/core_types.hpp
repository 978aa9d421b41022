#pragma once

// Value types shared by every part of the engine: vocabularies, score
// vectors, guide phrases, decoding configuration and per-session state.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "guidedec/error.hpp"

namespace guidedec {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

// ============================================================================
// Vocabulary
// ============================================================================

/// Ordered list of token strings; the position of a string is its id.
class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
      if (!inserted) {
        throw Error("non-unique vocabulary: duplicate token '" + tokens_[i] + "'");
      }
    }
  }

  Vocabulary(std::initializer_list<std::string> tokens)
      : Vocabulary(std::vector<std::string>(tokens)) {}

  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }

  bool contains(TokenId id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < tokens_.size();
  }

  const std::string& token(TokenId id) const {
    if (!contains(id)) throw Error("unknown token id " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::optional<TokenId> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

  /// Parses a JSON array of token strings in id order.
  static Vocabulary from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw Error("vocabulary JSON must be an array of strings");
    std::vector<std::string> tokens;
    tokens.reserve(j.size());
    for (const auto& t : j) {
      if (!t.is_string()) throw Error("vocabulary JSON must be an array of strings");
      tokens.push_back(t.get<std::string>());
    }
    return Vocabulary(std::move(tokens));
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open vocabulary file " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error("malformed vocabulary file " + path + ": " + e.what());
    }
    return from_json(j);
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// ============================================================================
// ScoreVector
// ============================================================================

/// Dense per-token scores on the natural-log scale.
class ScoreVector {
 public:
  ScoreVector() = default;
  explicit ScoreVector(std::size_t n, double fill = 0.0) : values_(n, fill) {}
  explicit ScoreVector(std::vector<double> values) : values_(std::move(values)) {}
  ScoreVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double at(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= values_.size()) {
      throw Error("unknown token id " + std::to_string(id));
    }
    return values_[static_cast<std::size_t>(id)];
  }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<double>& vec() const noexcept { return values_; }

  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }
  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }

  bool all_finite() const noexcept {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const ScoreVector&, const ScoreVector&) = default;

 private:
  std::vector<double> values_;
};

// ============================================================================
// Decoding configuration
// ============================================================================

enum class Strategy {
  kArOnly,       // plain top-K sampling of the autoregressive model
  kFusion,       // AR + masked-model score sum
  kFusionBoost,  // fusion plus guide-token boost
};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kArOnly: return "ar";
    case Strategy::kFusion: return "fusion";
    case Strategy::kFusionBoost: return "boost";
  }
  return "ar";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  if (s == "ar" || s == "ar_only" || s == "AR_ONLY") return Strategy::kArOnly;
  if (s == "fusion" || s == "FUSION") return Strategy::kFusion;
  if (s == "boost" || s == "fusion_boost" || s == "FUSION_BOOST") return Strategy::kFusionBoost;
  return std::nullopt;
}

/// How masked-model outputs enter the fused score.
enum class MaskedScoreScale {
  kLogProb,  // log-softmax applied when the backend returns raw logits
  kRaw,      // backend values used as-is
};

struct DecodingConfig {
  Strategy strategy = Strategy::kFusionBoost;
  std::size_t k = 10;
  double lambda0 = 0.3;
  std::size_t max_new_tokens = 90;
  std::uint64_t seed = 0;
  double temperature = 1.0;

  /// Masked-model contribution for AR tokens absent from the masked vocabulary.
  double penalize_unshared = 0.0;
  /// Re-normalize masked log-probabilities over the shared-token subset.
  bool renormalize_shared = false;
  MaskedScoreScale mlm_scale = MaskedScoreScale::kLogProb;

  /// Number of candidates kept per step in diagnostics.
  std::size_t trace_top_n = 10;

  void validate() const {
    if (k < 1) throw Error("k must be >= 1");
    if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) throw Error("lambda0 must be >= 0");
    if (max_new_tokens < 1) throw Error("max_new_tokens must be >= 1");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw Error("temperature must be > 0");
    }
    if (!std::isfinite(penalize_unshared)) throw Error("penalize_unshared must be finite");
  }
};

// ============================================================================
// Guide phrases
// ============================================================================

/// A word or collocation that must appear in the generated text.
struct GuidePhrase {
  std::string surface;                 // words joined by single spaces
  std::vector<std::string> words;
  TokenIds token_ids;                  // AR ids of the whole phrase
  TokenId first_token_id = 0;          // token_ids.front()
  std::string normalized_first_word;
  TokenIds tail_token_ids;             // AR ids of words[1..] (empty for one word)
  TokenIds mlm_token_ids;              // right context handed to the masked model
};

struct Storyline {
  std::vector<GuidePhrase> phrases;

  std::size_t size() const noexcept { return phrases.size(); }
  bool empty() const noexcept { return phrases.empty(); }
  const GuidePhrase& operator[](std::size_t i) const { return phrases[i]; }
};

// ============================================================================
// Generation state
// ============================================================================

enum class TriggerKind { kExactToken, kNormalizedWord };

struct InsertionRecord {
  std::size_t phrase_index = 0;
  std::size_t step = 0;           // step at which the trigger token was sampled
  TriggerKind trigger = TriggerKind::kExactToken;
  bool truncated = false;         // splice cut short by the token budget
};

struct GenerationState {
  TokenIds prompt_ids;
  TokenIds generated_ids;
  std::size_t step_i = 0;                   // == generated_ids.size() between steps
  std::size_t phrase_index = 0;             // == storyline size once exhausted
  std::size_t last_insertion_step_i_n = 0;
  std::vector<InsertionRecord> insertion_log;

  TokenIds context() const {
    TokenIds ctx;
    ctx.reserve(prompt_ids.size() + generated_ids.size());
    ctx.insert(ctx.end(), prompt_ids.begin(), prompt_ids.end());
    ctx.insert(ctx.end(), generated_ids.begin(), generated_ids.end());
    return ctx;
  }

  bool has_pending(const Storyline& story) const noexcept {
    return phrase_index < story.size();
  }
};

}  // namespace guidedec
