#pragma once

// Contracts for the two score sources the decoder consumes, plus the
// chain-rule scorer used by the perplexity metric.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>

#include "guidedec/core_types.hpp"

namespace guidedec {

/// Next-token scorer over its own vocabulary.
///
/// `score` returns one value per vocabulary entry. When `normalized()` is
/// true the values are log-probabilities; otherwise they are raw logits and
/// the engine applies log-softmax before use.
class AutoregressiveModel {
 public:
  virtual ~AutoregressiveModel() = default;
  virtual const Vocabulary& vocabulary() const = 0;
  virtual ScoreVector score(std::span<const TokenId> context) const = 0;
  virtual bool normalized() const { return true; }
  virtual std::optional<TokenId> eos_id() const { return std::nullopt; }
};

/// Scores the single masked position between `left` and `right`.
class MaskedModel {
 public:
  virtual ~MaskedModel() = default;
  virtual const Vocabulary& vocabulary() const = 0;
  virtual ScoreVector score_masked(std::span<const TokenId> left,
                                   std::span<const TokenId> right) const = 0;
  virtual bool normalized() const { return true; }
};

/// Sequence scorer used for perplexity.
class ScorerModel {
 public:
  virtual ~ScorerModel() = default;

  /// Σ log p(ids[j] | context, ids[<j]).
  virtual double conditional_log_prob(std::span<const TokenId> context,
                                      std::span<const TokenId> ids) const = 0;

  double sequence_log_prob(std::span<const TokenId> ids) const {
    return conditional_log_prob({}, ids);
  }
};

// ============================================================================
// Score helpers
// ============================================================================

/// Numerically stable log-softmax. Non-finite inputs are rejected.
inline ScoreVector log_softmax(const ScoreVector& logits) {
  if (logits.empty()) throw Error("log_softmax of empty vector");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw Error("non-finite logit");
    }
    mx = std::max(mx, v);
  }
  if (!std::isfinite(mx)) throw Error("degenerate distribution");
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  ScoreVector out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

inline void check_ids(std::span<const TokenId> ids, std::size_t vocab_size) {
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw Error("unknown token id " + std::to_string(id));
    }
  }
}

/// log p(· | context) from an autoregressive backend.
inline ScoreVector log_prob_score(const AutoregressiveModel& model,
                                  std::span<const TokenId> context) {
  const std::size_t n = model.vocabulary().size();
  check_ids(context, n);
  ScoreVector s = model.score(context);
  if (s.size() != n) throw BackendError("score/vocabulary size mismatch");
  if (!model.normalized()) s = log_softmax(s);
  if (!s.all_finite()) throw BackendError("backend returned non-finite scores");
  return s;
}

/// Masked-position scores, validated and brought to the requested scale.
inline ScoreVector masked_score(const MaskedModel& model, std::span<const TokenId> left,
                                std::span<const TokenId> right,
                                MaskedScoreScale scale = MaskedScoreScale::kLogProb) {
  const std::size_t n = model.vocabulary().size();
  check_ids(left, n);
  check_ids(right, n);
  ScoreVector s = model.score_masked(left, right);
  if (s.size() != n) throw BackendError("score/vocabulary size mismatch");
  if (scale == MaskedScoreScale::kLogProb && !model.normalized()) s = log_softmax(s);
  if (!s.all_finite()) throw BackendError("backend returned non-finite scores");
  return s;
}

/// Chain-rule scorer over any autoregressive backend.
class ChainRuleScorer final : public ScorerModel {
 public:
  explicit ChainRuleScorer(std::shared_ptr<const AutoregressiveModel> model)
      : model_(std::move(model)) {}

  double conditional_log_prob(std::span<const TokenId> context,
                              std::span<const TokenId> ids) const override {
    if (ids.empty()) throw Error("empty sequence");
    check_ids(ids, model_->vocabulary().size());
    TokenIds prefix(context.begin(), context.end());
    double total = 0.0;
    for (TokenId id : ids) {
      total += log_prob_score(*model_, prefix)[static_cast<std::size_t>(id)];
      prefix.push_back(id);
    }
    return total;
  }

 private:
  std::shared_ptr<const AutoregressiveModel> model_;
};

inline double sequence_log_prob(const ScorerModel& scorer, std::span<const TokenId> ids) {
  if (ids.empty()) throw Error("empty sequence");
  return scorer.sequence_log_prob(ids);
}

}  // namespace guidedec
