#pragma once

// Perplexity, n-gram repetition and guide-phrase success rate, plus
// mean ± std aggregation into a per-strategy report.

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "guidedec/core_types.hpp"
#include "guidedec/model_interface.hpp"
#include "guidedec/normalizer.hpp"

namespace guidedec::metrics {

/// exp(−mean log p) of `ids` given `context` (natural log).
inline double perplexity(std::span<const TokenId> ids, const ScorerModel& scorer,
                         std::span<const TokenId> context = {}) {
  if (ids.empty()) throw Error("empty sequence");
  const double lp = scorer.conditional_log_prob(context, ids);
  return std::exp(-lp / static_cast<double>(ids.size()));
}

/// 1 − unique/total over the n-gram occurrences of `seq`; 0 when shorter
/// than n.
template <typename T>
double repetition(std::span<const T> seq, std::size_t n = 4) {
  if (n < 1) throw Error("n-gram order must be >= 1");
  if (seq.size() < n) return 0.0;
  const std::size_t total = seq.size() - n + 1;
  std::set<std::vector<T>> unique;
  for (std::size_t i = 0; i < total; ++i) {
    unique.emplace(seq.begin() + static_cast<std::ptrdiff_t>(i),
                   seq.begin() + static_cast<std::ptrdiff_t>(i + n));
  }
  return 1.0 - static_cast<double>(unique.size()) / static_cast<double>(total);
}

inline double repetition(const TokenIds& ids, std::size_t n = 4) {
  return repetition<TokenId>(std::span<const TokenId>(ids), n);
}

/// Word-level variant over whitespace-separated words.
inline double word_repetition(std::string_view text, std::size_t n = 4) {
  const auto words = split_words(text);
  return repetition<std::string>(std::span<const std::string>(words), n);
}

struct PhraseOutcome {
  std::string phrase;
  bool occurred = false;
  std::optional<std::size_t> step;  // insertion step when inserted by the decoder
};

struct SuccessRate {
  double rate = 1.0;
  bool undefined = false;  // empty storyline
  std::vector<PhraseOutcome> per_phrase;
};

/// A phrase occurred if the decoder inserted it in full, or if all of its
/// words appear as a contiguous run of `generated_text` after normalization.
inline SuccessRate success_rate(const std::vector<InsertionRecord>& insertion_log,
                                std::string_view generated_text,
                                const std::vector<std::string>& phrases,
                                const WordNormalizer& normalizer) {
  SuccessRate out;
  if (phrases.empty()) {
    out.undefined = true;
    return out;
  }
  auto norm = [&](const std::string& w) {
    std::string s = strip_punct(w);
    return s.empty() ? std::string() : normalize_word(s, normalizer);
  };
  std::vector<std::string> text_words;
  for (const auto& w : split_words(generated_text)) text_words.push_back(norm(w));

  std::size_t hits = 0;
  for (std::size_t p = 0; p < phrases.size(); ++p) {
    PhraseOutcome o;
    o.phrase = phrases[p];
    for (const auto& rec : insertion_log) {
      if (rec.phrase_index == p && !rec.truncated) {
        o.occurred = true;
        o.step = rec.step;
      }
    }
    if (!o.occurred) {
      std::vector<std::string> pw;
      for (const auto& w : split_words(phrases[p])) pw.push_back(norm(w));
      if (!pw.empty() && pw.size() <= text_words.size()) {
        for (std::size_t s = 0; s + pw.size() <= text_words.size() && !o.occurred; ++s) {
          bool all = true;
          for (std::size_t k = 0; k < pw.size() && all; ++k) all = text_words[s + k] == pw[k];
          o.occurred = all;
        }
      }
    }
    if (o.occurred) ++hits;
    out.per_phrase.push_back(std::move(o));
  }
  out.rate = static_cast<double>(hits) / static_cast<double>(phrases.size());
  return out;
}

struct RunMeasures {
  double ppl = 1.0;
  double rep = 0.0;
  double sr = 1.0;
  bool sr_undefined = false;
  std::vector<PhraseOutcome> per_phrase;
};

struct MeasureSummary {
  double mean = 0.0;
  double std = 0.0;  // population
};

/// Mean and population std. Non-finite values (undefined measures, e.g. the
/// perplexity of an empty continuation) are left out.
inline MeasureSummary summarize(std::span<const double> values) {
  if (values.empty()) throw Error("no runs to aggregate");
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) return {std::nan(""), std::nan("")};
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) ss += (v - mean) * (v - mean);
  }
  return {mean, std::sqrt(ss / static_cast<double>(n))};
}

inline std::string format_pm(const MeasureSummary& m, int precision = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f \xC2\xB1 %.*f", precision, m.mean, precision, m.std);
  return buf;
}

struct AggregateSummary {
  std::size_t runs = 0;
  MeasureSummary ppl;
  MeasureSummary rep;
  MeasureSummary sr;
};

inline AggregateSummary aggregate(std::span<const RunMeasures> runs) {
  if (runs.empty()) throw Error("no runs to aggregate");
  std::vector<double> ppl, rep, sr;
  for (const auto& r : runs) {
    ppl.push_back(r.ppl);
    rep.push_back(r.rep);
    sr.push_back(r.sr);
  }
  return {runs.size(), summarize(ppl), summarize(rep), summarize(sr)};
}

// ============================================================================
// Report
// ============================================================================

struct ReportRow {
  Strategy strategy = Strategy::kArOnly;
  std::optional<double> lambda0;  // only meaningful for the boost strategy
  AggregateSummary summary;
};

/// Groups runs by (strategy, λ₀) in a stable order: ar, fusion, boost by λ₀.
class Report {
 public:
  void add(Strategy s, double lambda0, const RunMeasures& m) {
    const double key_lambda = s == Strategy::kFusionBoost ? lambda0 : -1.0;
    groups_[{static_cast<int>(s), key_lambda}].push_back(m);
  }

  std::vector<ReportRow> rows() const {
    std::vector<ReportRow> out;
    for (const auto& [key, runs] : groups_) {
      ReportRow r;
      r.strategy = static_cast<Strategy>(key.first);
      if (key.second >= 0.0) r.lambda0 = key.second;
      r.summary = aggregate(runs);
      out.push_back(std::move(r));
    }
    return out;
  }

  bool empty() const noexcept { return groups_.empty(); }

  std::string render_table() const {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-10s %-8s %-16s %-10s %-10s %s\n", "strategy", "lambda0",
                  "PPL \xC2\xB1 Std", "Rep, %", "SR, %", "runs");
    out += line;
    for (const auto& r : rows()) {
      char lam[32] = "-";
      if (r.lambda0) std::snprintf(lam, sizeof lam, "%.2f", *r.lambda0);
      const std::string ppl = format_pm(r.summary.ppl, 1);
      // The ± sign is two bytes but one column wide.
      std::snprintf(line, sizeof line, "%-10s %-8s %-17s %-10.2f %-10.2f %zu\n",
                    std::string(to_string(r.strategy)).c_str(), lam, ppl.c_str(),
                    100.0 * r.summary.rep.mean, 100.0 * r.summary.sr.mean, r.summary.runs);
      out += line;
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows()) {
      auto stat = [](const MeasureSummary& m) {
        return nlohmann::json{{"mean", m.mean}, {"std", m.std}};
      };
      rows_json.push_back({{"strategy", to_string(r.strategy)},
                           {"lambda0", r.lambda0 ? nlohmann::json(*r.lambda0) : nlohmann::json()},
                           {"runs", r.summary.runs},
                           {"ppl", stat(r.summary.ppl)},
                           {"rep", stat(r.summary.rep)},
                           {"sr", stat(r.summary.sr)}});
    }
    return {{"rows", rows_json}};
  }

 private:
  std::map<std::pair<int, double>, std::vector<RunMeasures>> groups_;
};

}  // namespace guidedec::metrics
