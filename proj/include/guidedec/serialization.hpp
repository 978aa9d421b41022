#pragma once

// JSON encodings for trace lines and generation output records. Field names
// are documented in docs/formats.md.

#include <optional>
#include <string>

#include <json.hpp>

#include "guidedec/guided_decoder.hpp"
#include "guidedec/metrics.hpp"

namespace guidedec {

inline std::string_view to_string(TriggerKind k) {
  return k == TriggerKind::kExactToken ? "token" : "word";
}

inline nlohmann::json to_json(const InsertionRecord& r) {
  return {{"phrase_index", r.phrase_index},
          {"step", r.step},
          {"trigger", to_string(r.trigger)},
          {"truncated", r.truncated}};
}

inline nlohmann::json to_json(const std::vector<InsertionRecord>& log) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : log) a.push_back(to_json(r));
  return a;
}

inline std::vector<InsertionRecord> insertion_log_from_json(const nlohmann::json& a) {
  std::vector<InsertionRecord> log;
  for (const auto& j : a) {
    InsertionRecord r;
    r.phrase_index = j.at("phrase_index").get<std::size_t>();
    r.step = j.at("step").get<std::size_t>();
    r.trigger = j.value("trigger", std::string("token")) == "word" ? TriggerKind::kNormalizedWord
                                                                   : TriggerKind::kExactToken;
    r.truncated = j.value("truncated", false);
    log.push_back(r);
  }
  return log;
}

inline nlohmann::json to_json(const BoostBreakdown& b) {
  return {{"token_id", b.token},   {"pre_boost", b.pre_boost}, {"post_boost", b.post_boost},
          {"boosted", b.boosted},  {"lambda", b.lambda},       {"alpha", b.alpha},
          {"delta", b.delta},      {"s_min", b.s_min},         {"s_max", b.s_max},
          {"s_k", b.s_k},          {"applied", b.applied()}};
}

/// One trace line.
inline nlohmann::json to_json(const StepDiagnostics& d, const Vocabulary& vocab) {
  nlohmann::json j{{"step", d.step},
                   {"forced", d.forced},
                   {"chosen_id", d.chosen_id},
                   {"chosen_token", vocab.token(d.chosen_id)}};
  j["phrase_index"] = d.phrase_index ? nlohmann::json(*d.phrase_index) : nlohmann::json();
  if (d.forced) return j;
  nlohmann::json top = nlohmann::json::array();
  for (const auto& c : d.top_candidates) {
    top.push_back({{"id", c.id},
                   {"token", c.token},
                   {"ar", c.ar_score},
                   {"mlm", c.mlm_score},
                   {"fused", c.fused_score}});
  }
  nlohmann::json sampling = nlohmann::json::array();
  for (const auto& c : d.sampling) sampling.push_back({{"id", c.id}, {"p", c.probability}});
  j["top_candidates"] = std::move(top);
  j["sampling"] = std::move(sampling);
  j["boost"] = d.boost ? to_json(*d.boost) : nlohmann::json();
  j["trigger"] = d.trigger ? nlohmann::json(to_string(*d.trigger)) : nlohmann::json();
  return j;
}

inline nlohmann::json to_json(const metrics::RunMeasures& m) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& p : m.per_phrase) {
    per.push_back({{"phrase", p.phrase},
                   {"occurred", p.occurred},
                   {"step", p.step ? nlohmann::json(*p.step) : nlohmann::json()}});
  }
  return {{"ppl", m.ppl},
          {"rep", m.rep},
          {"sr", m.sr},
          {"sr_undefined", m.sr_undefined},
          {"per_phrase", std::move(per)}};
}

}  // namespace guidedec
