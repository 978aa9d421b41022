#pragma once

// Guided decoding: the AR next-token scores are summed with masked-model
// scores for the position in front of the pending guide phrase, the
// phrase's first token is lifted into the top-K set with a strength that
// grows linearly since the last insertion, and once the first token (or
// its word) appears the rest of the phrase is spliced in.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "guidedec/core_types.hpp"
#include "guidedec/model_interface.hpp"
#include "guidedec/normalizer.hpp"
#include "guidedec/rng.hpp"
#include "guidedec/sampling.hpp"
#include "guidedec/tokenizer.hpp"
#include "guidedec/vocab_align.hpp"

namespace guidedec {

// ============================================================================
// Score arithmetic
// ============================================================================

/// Elementwise sum of AR scores and projected masked-model scores.
inline ScoreVector fuse_scores(const ScoreVector& ar, const ScoreVector& mlm_projected) {
  if (ar.size() != mlm_projected.size()) throw Error("score/vocabulary size mismatch");
  ScoreVector out(ar.size());
  for (std::size_t i = 0; i < ar.size(); ++i) out[i] = ar[i] + mlm_projected[i];
  return out;
}

/// Boost strength λ₀·(i − i_n).
inline double lambda_at_step(double lambda0, std::size_t step, std::size_t last_insertion) {
  if (step <= last_insertion) throw Error("step before last insertion");
  if (!(lambda0 >= 0.0)) throw Error("lambda0 must be >= 0");
  return lambda0 * static_cast<double>(step - last_insertion);
}

/// Relative position of w1 inside [s_min, s_max]; 1 when the range is empty.
inline double relative_position_alpha(double s_w1, double s_min, double s_max) {
  if (s_w1 < s_min || s_w1 > s_max) throw Error("guide-token score outside [s_min, s_max]");
  if (s_max == s_min) return 1.0;
  return (s_w1 - s_min) / (s_max - s_min);
}

inline double headroom_delta(double s_max, double s_k) {
  if (s_k > s_max) throw Error("s_K exceeds s_max");
  return s_max - s_k;
}

struct BoostBreakdown {
  TokenId token = 0;
  double s_min = 0.0;
  double s_max = 0.0;
  double s_k = 0.0;
  double lambda = 0.0;
  double alpha = 0.0;
  double delta = 0.0;
  double pre_boost = 0.0;   // natural fused score of w1
  double boosted = 0.0;     // s_K + λ·α·Δ
  double post_boost = 0.0;  // max(pre_boost, boosted)

  bool applied() const noexcept { return boosted > pre_boost; }
};

struct BoostResult {
  ScoreVector scores;
  BoostBreakdown breakdown;
};

/// Lifts w1 to s_K + λ·α·Δ. s_min, s_max and s_K range over the whole
/// vector; a token already scoring above the boosted value keeps its score.
inline BoostResult boost_guide_token(const ScoreVector& fused, TokenId w1, std::size_t k,
                                     double lambda) {
  if (w1 < 0 || static_cast<std::size_t>(w1) >= fused.size()) {
    throw Error("guide token id " + std::to_string(w1) + " out of range");
  }
  BoostBreakdown b;
  b.token = w1;
  b.lambda = lambda;
  const auto [mn, mx] = std::minmax_element(fused.begin(), fused.end());
  b.s_min = *mn;
  b.s_max = *mx;
  b.s_k = kth_score(fused, k);
  b.pre_boost = fused[static_cast<std::size_t>(w1)];
  b.alpha = relative_position_alpha(b.pre_boost, b.s_min, b.s_max);
  b.delta = headroom_delta(b.s_max, b.s_k);
  b.boosted = b.s_k + lambda * b.alpha * b.delta;
  b.post_boost = std::max(b.pre_boost, b.boosted);

  BoostResult r{fused, b};
  r.scores[static_cast<std::size_t>(w1)] = b.post_boost;
  return r;
}

// ============================================================================
// Phrase triggering and insertion
// ============================================================================

/// How (if at all) the chosen token completes the pending phrase's first
/// word. `current_word` is the just-completed word, or empty when the token
/// did not complete one.
inline std::optional<TriggerKind> classify_trigger(TokenId chosen_id,
                                                   std::string_view current_word,
                                                   const GuidePhrase& pending,
                                                   const WordNormalizer& normalizer) {
  if (chosen_id == pending.first_token_id) return TriggerKind::kExactToken;
  if (!current_word.empty() &&
      normalize_word(current_word, normalizer) == pending.normalized_first_word) {
    return TriggerKind::kNormalizedWord;
  }
  return std::nullopt;
}

inline bool detect_phrase_trigger(TokenId chosen_id, std::string_view current_word,
                                  const GuidePhrase& pending, const WordNormalizer& normalizer) {
  return classify_trigger(chosen_id, current_word, pending, normalizer).has_value();
}

/// Splices the rest of `pending` after the trigger token and advances the
/// storyline. Returns the spliced ids (possibly cut short by the budget).
inline TokenIds insert_phrase(GenerationState& state, const GuidePhrase& pending,
                              TriggerKind trigger, std::size_t max_new_tokens) {
  const std::size_t trigger_step = state.generated_ids.size();
  TokenIds rest;
  if (trigger == TriggerKind::kExactToken) {
    rest.assign(pending.token_ids.begin() + 1, pending.token_ids.end());
  } else {
    rest = pending.tail_token_ids;
  }
  const std::size_t room =
      max_new_tokens > state.generated_ids.size() ? max_new_tokens - state.generated_ids.size() : 0;
  const bool truncated = rest.size() > room;
  if (truncated) rest.resize(room);

  state.generated_ids.insert(state.generated_ids.end(), rest.begin(), rest.end());
  state.step_i = state.generated_ids.size();
  state.insertion_log.push_back({state.phrase_index, trigger_step, trigger, truncated});
  state.last_insertion_step_i_n = state.step_i;
  ++state.phrase_index;
  return rest;
}

// ============================================================================
// Decoder
// ============================================================================

struct Backends {
  std::shared_ptr<const AutoregressiveModel> ar;
  std::shared_ptr<const Tokenizer> ar_tokenizer;
  std::shared_ptr<const MaskedModel> mlm;
  std::shared_ptr<const Tokenizer> mlm_tokenizer;
  /// Built from the two vocabularies when left empty.
  std::shared_ptr<const AlignmentMap> alignment;
  /// Defaults to case folding.
  std::shared_ptr<const WordNormalizer> normalizer;
};

struct ScoredCandidate {
  TokenId id = 0;
  std::string token;
  double ar_score = 0.0;
  double mlm_score = 0.0;
  double fused_score = 0.0;  // score used for sampling (after any boost)
};

struct StepDiagnostics {
  std::size_t step = 0;
  bool forced = false;  // spliced phrase token, not sampled
  std::vector<ScoredCandidate> top_candidates;
  CategoricalDistribution sampling;
  std::optional<BoostBreakdown> boost;
  TokenId chosen_id = 0;
  std::optional<TriggerKind> trigger;
  std::optional<std::size_t> phrase_index;  // pending phrase when sampled / spliced
};

/// Everything computed for one step before the draw.
struct StepPlan {
  ScoreVector ar;
  std::optional<ScoreVector> mlm_projected;
  ScoreVector fused;
  ScoreVector final_scores;
  std::optional<BoostBreakdown> boost;
  CategoricalDistribution distribution;
};

enum class StopReason { kBudget, kEndOfText };

inline std::string_view to_string(StopReason r) {
  return r == StopReason::kBudget ? "budget" : "end_of_text";
}

struct GenerationResult {
  std::string prompt;
  TokenIds prompt_ids;
  TokenIds generated_ids;
  std::string text;            // prompt followed by the generated continuation
  std::string generated_text;  // continuation only
  std::vector<InsertionRecord> insertion_log;
  std::vector<std::size_t> unmet_phrases;
  StopReason stop_reason = StopReason::kBudget;
  std::vector<StepDiagnostics> trace;
};

/// Raised when a backend fails mid-generation; carries what was produced.
class GenerationError : public Error {
 public:
  GenerationError(const std::string& what, GenerationResult partial)
      : Error(what), partial_(std::move(partial)) {}
  const GenerationResult& partial() const noexcept { return partial_; }

 private:
  GenerationResult partial_;
};

class GuidedDecoder {
 public:
  GuidedDecoder(Backends backends, DecodingConfig config)
      : b_(std::move(backends)), cfg_(config) {
    cfg_.validate();
    if (!b_.ar || !b_.ar_tokenizer) throw Error("an autoregressive backend is required");
    if (b_.ar_tokenizer->vocabulary().size() != b_.ar->vocabulary().size()) {
      throw Error("AR tokenizer and model vocabularies differ in size");
    }
    if (!b_.normalizer) b_.normalizer = std::make_shared<CaseFoldNormalizer>();
    if (cfg_.strategy != Strategy::kArOnly) {
      if (!b_.mlm) throw Error("strategy '" + std::string(to_string(cfg_.strategy)) +
                               "' requires a masked-model backend");
      if (!b_.alignment) {
        b_.alignment = std::make_shared<AlignmentMap>(
            build_alignment(b_.ar->vocabulary(), b_.mlm->vocabulary()));
      }
      if (b_.alignment->ar_size() != b_.ar->vocabulary().size() ||
          b_.alignment->mlm_size() != b_.mlm->vocabulary().size()) {
        throw Error("alignment does not match backend vocabularies");
      }
      shared_vocab_ = b_.ar->vocabulary() == b_.mlm->vocabulary();
      if (!shared_vocab_ && !b_.mlm_tokenizer) {
        throw Error("a masked-model tokenizer is required when vocabularies differ");
      }
    }
  }

  const DecodingConfig& config() const noexcept { return cfg_; }
  const Backends& backends() const noexcept { return b_; }

  /// Guide phrases tokenized with this decoder's tokenizers and normalizer.
  Storyline make_storyline(const std::vector<std::string>& surfaces) const {
    const Tokenizer* mlm_tok = (b_.mlm && !shared_vocab_) ? b_.mlm_tokenizer.get() : nullptr;
    return guidedec::make_storyline(surfaces, *b_.ar_tokenizer, *b_.normalizer, mlm_tok);
  }

  GenerationState start(TokenIds prompt_ids) const {
    if (prompt_ids.empty()) throw Error("prompt must tokenize to at least one token");
    check_ids(prompt_ids, b_.ar->vocabulary().size());
    GenerationState s;
    s.prompt_ids = std::move(prompt_ids);
    return s;
  }

  /// Scores and sampling distribution for the next token.
  StepPlan plan(const GenerationState& state, const Storyline& story) const {
    StepPlan p;
    const TokenIds ctx = state.context();
    p.ar = log_prob_score(*b_.ar, ctx);

    const bool pending = state.has_pending(story);
    if (cfg_.strategy != Strategy::kArOnly && pending) {
      const GuidePhrase& phrase = story[state.phrase_index];
      const TokenIds left =
          shared_vocab_ ? ctx : b_.mlm_tokenizer->encode(b_.ar_tokenizer->decode(ctx));
      ScoreVector mlm = masked_score(*b_.mlm, left, phrase.mlm_token_ids, cfg_.mlm_scale);
      if (cfg_.renormalize_shared) mlm = renormalize_shared(mlm, *b_.alignment);
      p.mlm_projected = project_scores(mlm, *b_.alignment, cfg_.penalize_unshared);
      p.fused = fuse_scores(p.ar, *p.mlm_projected);

      if (cfg_.strategy == Strategy::kFusionBoost) {
        const double lambda =
            lambda_at_step(cfg_.lambda0, state.step_i + 1, state.last_insertion_step_i_n);
        BoostResult r = boost_guide_token(p.fused, phrase.first_token_id, cfg_.k, lambda);
        p.final_scores = std::move(r.scores);
        p.boost = r.breakdown;
      } else {
        p.final_scores = p.fused;
      }
    } else {
      p.fused = p.ar;
      p.final_scores = p.ar;
    }
    p.distribution = top_k_distribution(p.final_scores, cfg_.k, cfg_.temperature);
    return p;
  }

  /// Appends `chosen` and runs trigger detection / phrase insertion.
  /// Returns the trigger kind (if any) and the spliced ids.
  std::pair<std::optional<TriggerKind>, TokenIds> commit(GenerationState& state,
                                                         const Storyline& story,
                                                         TokenId chosen) const {
    state.generated_ids.push_back(chosen);
    state.step_i = state.generated_ids.size();
    if (!state.has_pending(story)) return {std::nullopt, {}};

    const GuidePhrase& phrase = story[state.phrase_index];
    const auto trigger =
        classify_trigger(chosen, completed_word(state, chosen), phrase, *b_.normalizer);
    if (!trigger) return {std::nullopt, {}};
    TokenIds spliced = insert_phrase(state, phrase, *trigger, cfg_.max_new_tokens);
    return {trigger, std::move(spliced)};
  }

  /// One sampled token (plus any splice). Precondition: budget not exhausted.
  StepDiagnostics step(GenerationState& state, const Storyline& story, Rng& rng) const {
    if (state.generated_ids.size() >= cfg_.max_new_tokens) throw Error("token budget exhausted");
    StepPlan p = plan(state, story);
    StepDiagnostics d = describe(state, story, p);
    d.chosen_id = sample_categorical(p.distribution, rng);
    if (is_eos(d.chosen_id)) return d;
    auto [trigger, spliced] = commit(state, story, d.chosen_id);
    d.trigger = trigger;
    return d;
  }

  GenerationResult generate(std::string_view prompt, const Storyline& story,
                            bool trace = false) const {
    GenerationResult r;
    r.prompt = std::string(prompt);
    return run(b_.ar_tokenizer->encode(prompt), story, trace, std::move(r));
  }

  GenerationResult generate(TokenIds prompt_ids, const Storyline& story,
                            bool trace = false) const {
    GenerationResult r;
    r.prompt = b_.ar_tokenizer->decode(prompt_ids);
    return run(std::move(prompt_ids), story, trace, std::move(r));
  }

 private:
  bool is_eos(TokenId id) const {
    auto eos = b_.ar->eos_id();
    return eos && *eos == id;
  }

  /// The word the chosen token completes, or "" when the token carries no
  /// word characters or ends in whitespace.
  std::string completed_word(const GenerationState& state, TokenId chosen) const {
    const TokenId one[] = {chosen};
    const std::string token_text = b_.ar_tokenizer->decode(one);
    if (token_text.empty() || is_space(static_cast<unsigned char>(token_text.back()))) return {};
    bool has_word_char = false;
    for (char32_t c : utf8::code_points(token_text)) {
      if (!is_space(c) && !is_punct(c)) {
        has_word_char = true;
        break;
      }
    }
    if (!has_word_char) return {};
    const auto words = split_words(b_.ar_tokenizer->decode(state.generated_ids));
    if (words.empty()) return {};
    return strip_punct(words.back());
  }

  StepDiagnostics describe(const GenerationState& state, const Storyline& story,
                           const StepPlan& p) const {
    StepDiagnostics d;
    d.step = state.step_i + 1;
    d.sampling = p.distribution;
    d.boost = p.boost;
    if (state.has_pending(story)) d.phrase_index = state.phrase_index;
    for (TokenId id : top_k_ids(p.final_scores, cfg_.trace_top_n)) {
      const auto i = static_cast<std::size_t>(id);
      d.top_candidates.push_back({id, b_.ar->vocabulary().token(id), p.ar[i],
                                  p.mlm_projected ? (*p.mlm_projected)[i] : 0.0,
                                  p.final_scores[i]});
    }
    return d;
  }

  GenerationResult run(TokenIds prompt_ids, const Storyline& story, bool trace,
                       GenerationResult r) const {
    GenerationState state = start(std::move(prompt_ids));
    Rng rng(cfg_.seed);
    r.prompt_ids = state.prompt_ids;

    auto finish = [&](GenerationResult& out) {
      out.generated_ids = state.generated_ids;
      out.insertion_log = state.insertion_log;
      out.generated_text = b_.ar_tokenizer->decode(state.generated_ids);
      out.text = b_.ar_tokenizer->decode(state.context());
      out.unmet_phrases.clear();
      for (std::size_t i = state.phrase_index; i < story.size(); ++i) {
        out.unmet_phrases.push_back(i);
      }
    };

    while (state.generated_ids.size() < cfg_.max_new_tokens) {
      const std::size_t before = state.generated_ids.size();
      StepDiagnostics d;
      try {
        d = step(state, story, rng);
      } catch (const Error& e) {
        finish(r);
        throw GenerationError(StepError(before + 1, e.what()).what(), std::move(r));
      }
      const bool eos = state.generated_ids.size() == before;
      const std::optional<std::size_t> inserted_phrase =
          d.trigger ? std::optional<std::size_t>(state.phrase_index - 1) : std::nullopt;
      if (trace) r.trace.push_back(std::move(d));
      if (eos) {
        r.stop_reason = StopReason::kEndOfText;
        break;
      }
      if (trace) {
        for (std::size_t j = before + 1; j < state.generated_ids.size(); ++j) {
          StepDiagnostics f;
          f.step = j + 1;
          f.forced = true;
          f.chosen_id = state.generated_ids[j];
          f.phrase_index = inserted_phrase;
          r.trace.push_back(std::move(f));
        }
      }
    }
    finish(r);
    return r;
  }

  Backends b_;
  DecodingConfig cfg_;
  bool shared_vocab_ = false;
};

}  // namespace guidedec
