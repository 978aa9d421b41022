#pragma once

// Top-K candidate selection and categorical sampling. Ties are always
// broken by ascending token id so candidate sets are platform-stable.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "guidedec/core_types.hpp"
#include "guidedec/rng.hpp"

namespace guidedec {

struct Candidate {
  TokenId id = 0;
  double probability = 0.0;
};

using CategoricalDistribution = std::vector<Candidate>;

/// Strict ordering: higher score first, then lower id.
inline bool ranks_before(const ScoreVector& s, TokenId a, TokenId b) {
  const double sa = s[static_cast<std::size_t>(a)], sb = s[static_cast<std::size_t>(b)];
  if (sa != sb) return sa > sb;
  return a < b;
}

/// Ids of the k best-scoring tokens in rank order. k is clamped to the
/// vector length.
inline TokenIds top_k_ids(const ScoreVector& scores, std::size_t k) {
  if (k < 1) throw Error("k must be >= 1");
  if (scores.empty()) throw Error("empty score vector");
  k = std::min(k, scores.size());
  TokenIds ids(scores.size());
  std::iota(ids.begin(), ids.end(), TokenId{0});
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                    [&](TokenId a, TokenId b) { return ranks_before(scores, a, b); });
  ids.resize(k);
  return ids;
}

/// Score of the k-th ranked token (s_K).
inline double kth_score(const ScoreVector& scores, std::size_t k) {
  if (k < 1) throw Error("k must be >= 1");
  if (scores.empty()) throw Error("empty score vector");
  k = std::min(k, scores.size());
  TokenIds ids(scores.size());
  std::iota(ids.begin(), ids.end(), TokenId{0});
  std::nth_element(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k - 1), ids.end(),
                   [&](TokenId a, TokenId b) { return ranks_before(scores, a, b); });
  return scores[static_cast<std::size_t>(ids[k - 1])];
}

/// Softmax of score/temperature restricted to the top-k set, in rank order.
inline CategoricalDistribution top_k_distribution(const ScoreVector& scores, std::size_t k,
                                                  double temperature = 1.0) {
  if (!(temperature > 0.0)) throw Error("temperature must be > 0");
  const TokenIds ids = top_k_ids(scores, k);
  const double best = scores[static_cast<std::size_t>(ids.front())];
  if (std::isnan(best) || best == -std::numeric_limits<double>::infinity()) {
    throw Error("degenerate distribution");
  }
  CategoricalDistribution dist;
  dist.reserve(ids.size());
  double total = 0.0;
  for (TokenId id : ids) {
    const double w = std::exp((scores[static_cast<std::size_t>(id)] - best) / temperature);
    dist.push_back({id, w});
    total += w;
  }
  for (auto& c : dist) c.probability /= total;
  return dist;
}

/// Draws one id with exactly one call to the generator.
inline TokenId sample_categorical(const CategoricalDistribution& dist, Rng& rng) {
  if (dist.empty()) throw Error("degenerate distribution");
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (const auto& c : dist) {
    cumulative += c.probability;
    if (u < cumulative) return c.id;
  }
  // Rounding left u above the final cumulative sum.
  for (auto it = dist.rbegin(); it != dist.rend(); ++it) {
    if (it->probability > 0.0) return it->id;
  }
  return dist.back().id;
}

inline TokenId top_k_sample(const ScoreVector& scores, std::size_t k, double temperature,
                            Rng& rng) {
  return sample_categorical(top_k_distribution(scores, k, temperature), rng);
}

}  // namespace guidedec
