#pragma once

// Brute-force recomputation of the decoder's per-step sampling
// distribution. Deliberately shares no fusion, boost or top-K code with
// guided_decoder.hpp / sampling.hpp: every quantity is rebuilt from a full
// naive sort of the vocabulary.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "guidedec/core_types.hpp"
#include "guidedec/model_interface.hpp"
#include "guidedec/vocab_align.hpp"

namespace guidedec::reference {

namespace oracle_detail {

inline std::vector<double> to_log_probs(const ScoreVector& raw, bool normalized) {
  std::vector<double> v(raw.begin(), raw.end());
  if (normalized) return v;
  double mx = v[0];
  for (double x : v) mx = x > mx ? x : mx;
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  for (double& x : v) x = x - mx - std::log(z);
  return v;
}

/// All (score, id) pairs sorted best-first, ties by ascending id.
inline std::vector<std::pair<double, TokenId>> ranked(const std::vector<double>& s) {
  std::vector<std::pair<double, TokenId>> r;
  for (std::size_t i = 0; i < s.size(); ++i) r.emplace_back(s[i], static_cast<TokenId>(i));
  std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  return r;
}

}  // namespace oracle_detail

/// Exact probability of each AR token being sampled at the next step.
/// Requires the masked model (when used) to share the AR vocabulary ids, as
/// the toy fixtures do.
inline std::vector<double> oracle_step_distribution(const GenerationState& state,
                                                    const AutoregressiveModel& ar,
                                                    const MaskedModel* mlm,
                                                    const AlignmentMap* alignment,
                                                    const Storyline& story,
                                                    const DecodingConfig& cfg) {
  using namespace oracle_detail;
  TokenIds ctx = state.prompt_ids;
  ctx.insert(ctx.end(), state.generated_ids.begin(), state.generated_ids.end());

  std::vector<double> score = to_log_probs(ar.score(ctx), ar.normalized());
  const std::size_t n = score.size();

  const bool pending = state.phrase_index < story.phrases.size();
  if (cfg.strategy != Strategy::kArOnly && pending) {
    const GuidePhrase& phrase = story.phrases[state.phrase_index];
    const ScoreVector raw = mlm->score_masked(ctx, phrase.mlm_token_ids);
    std::vector<double> m = (cfg.mlm_scale == MaskedScoreScale::kLogProb)
                                ? to_log_probs(raw, mlm->normalized())
                                : std::vector<double>(raw.begin(), raw.end());
    const auto& table = alignment->table();
    if (cfg.renormalize_shared) {
      double z = 0.0;
      for (TokenId t : table) {
        if (t >= 0) z += std::exp(m[static_cast<std::size_t>(t)]);
      }
      std::vector<double> m2 = m;
      for (TokenId t : table) {
        if (t >= 0) m2[static_cast<std::size_t>(t)] = m[static_cast<std::size_t>(t)] - std::log(z);
      }
      m = m2;
    }
    for (std::size_t a = 0; a < n; ++a) {
      score[a] += table[a] >= 0 ? m[static_cast<std::size_t>(table[a])] : cfg.penalize_unshared;
    }

    if (cfg.strategy == Strategy::kFusionBoost) {
      const auto order = ranked(score);
      const double s_max = order.front().first;
      const double s_min = order.back().first;
      const std::size_t kk = cfg.k < n ? cfg.k : n;
      const double s_k = order[kk - 1].first;
      const auto w1 = static_cast<std::size_t>(phrase.first_token_id);
      const double s_w1 = score[w1];
      const double alpha = (s_max == s_min) ? 1.0 : (s_w1 - s_min) / (s_max - s_min);
      const double delta = s_max - s_k;
      const double i = static_cast<double>(state.generated_ids.size() + 1);
      const double i_n = static_cast<double>(state.last_insertion_step_i_n);
      const double lambda = cfg.lambda0 * (i - i_n);
      const double boosted = s_k + lambda * alpha * delta;
      if (boosted > s_w1) score[w1] = boosted;
    }
  }

  const auto order = ranked(score);
  const std::size_t kk = cfg.k < n ? cfg.k : n;
  std::vector<double> probs(n, 0.0);
  double z = 0.0;
  for (std::size_t r = 0; r < kk; ++r) z += std::exp((order[r].first - order[0].first) / cfg.temperature);
  for (std::size_t r = 0; r < kk; ++r) {
    probs[static_cast<std::size_t>(order[r].second)] =
        std::exp((order[r].first - order[0].first) / cfg.temperature) / z;
  }
  return probs;
}

}  // namespace guidedec::reference
