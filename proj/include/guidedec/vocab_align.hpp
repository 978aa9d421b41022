#pragma once

// Token-level mapping between the autoregressive and masked-model
// vocabularies. Tokens are matched by exact byte equality.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "guidedec/core_types.hpp"

namespace guidedec {

class AlignmentMap {
 public:
  static constexpr TokenId kUnmapped = -1;

  AlignmentMap() = default;
  AlignmentMap(std::vector<TokenId> ar_to_mlm, std::size_t mlm_size)
      : ar_to_mlm_(std::move(ar_to_mlm)), mlm_size_(mlm_size) {
    std::vector<bool> seen(mlm_size_, false);
    for (TokenId m : ar_to_mlm_) {
      if (m == kUnmapped) continue;
      if (m < 0 || static_cast<std::size_t>(m) >= mlm_size_) {
        throw Error("alignment target out of range");
      }
      if (seen[static_cast<std::size_t>(m)]) throw Error("alignment is not injective");
      seen[static_cast<std::size_t>(m)] = true;
      ++shared_count_;
    }
  }

  std::size_t ar_size() const noexcept { return ar_to_mlm_.size(); }
  std::size_t mlm_size() const noexcept { return mlm_size_; }
  std::size_t shared_count() const noexcept { return shared_count_; }

  std::optional<TokenId> lookup(TokenId ar_id) const {
    if (ar_id < 0 || static_cast<std::size_t>(ar_id) >= ar_to_mlm_.size()) {
      throw Error("unknown token id " + std::to_string(ar_id));
    }
    TokenId m = ar_to_mlm_[static_cast<std::size_t>(ar_id)];
    if (m == kUnmapped) return std::nullopt;
    return m;
  }

  /// Raw table, kUnmapped for AR tokens absent from the masked vocabulary.
  const std::vector<TokenId>& table() const noexcept { return ar_to_mlm_; }

  bool is_identity() const noexcept {
    if (ar_to_mlm_.size() != mlm_size_) return false;
    for (std::size_t i = 0; i < ar_to_mlm_.size(); ++i) {
      if (ar_to_mlm_[i] != static_cast<TokenId>(i)) return false;
    }
    return true;
  }

 private:
  std::vector<TokenId> ar_to_mlm_;
  std::size_t mlm_size_ = 0;
  std::size_t shared_count_ = 0;
};

inline AlignmentMap build_alignment(const Vocabulary& ar_vocab, const Vocabulary& mlm_vocab) {
  if (ar_vocab.empty() || mlm_vocab.empty()) throw Error("empty vocabulary");
  std::vector<TokenId> map(ar_vocab.size(), AlignmentMap::kUnmapped);
  for (std::size_t a = 0; a < ar_vocab.size(); ++a) {
    if (auto m = mlm_vocab.find(ar_vocab.tokens()[a])) map[a] = *m;
  }
  return AlignmentMap(std::move(map), mlm_vocab.size());
}

/// Relabels masked-model scores into AR id space. Unmapped AR positions get
/// `fill`.
inline ScoreVector project_scores(const ScoreVector& mlm_scores, const AlignmentMap& map,
                                  double fill = 0.0) {
  if (mlm_scores.size() != map.mlm_size()) throw Error("score/vocabulary size mismatch");
  ScoreVector out(map.ar_size(), fill);
  const auto& table = map.table();
  for (std::size_t a = 0; a < table.size(); ++a) {
    if (table[a] != AlignmentMap::kUnmapped) out[a] = mlm_scores[static_cast<std::size_t>(table[a])];
  }
  return out;
}

/// Log-softmax restricted to the masked-vocabulary entries that have an AR
/// counterpart; unshared entries are left untouched.
inline ScoreVector renormalize_shared(const ScoreVector& mlm_scores, const AlignmentMap& map) {
  if (mlm_scores.size() != map.mlm_size()) throw Error("score/vocabulary size mismatch");
  std::vector<bool> shared(map.mlm_size(), false);
  for (TokenId m : map.table()) {
    if (m != AlignmentMap::kUnmapped) shared[static_cast<std::size_t>(m)] = true;
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < shared.size(); ++i) {
    if (shared[i]) mx = std::max(mx, mlm_scores[i]);
  }
  if (!std::isfinite(mx)) return mlm_scores;
  double sum = 0.0;
  for (std::size_t i = 0; i < shared.size(); ++i) {
    if (shared[i]) sum += std::exp(mlm_scores[i] - mx);
  }
  const double lse = mx + std::log(sum);
  ScoreVector out = mlm_scores;
  for (std::size_t i = 0; i < shared.size(); ++i) {
    if (shared[i]) out[i] = mlm_scores[i] - lse;
  }
  return out;
}

}  // namespace guidedec
