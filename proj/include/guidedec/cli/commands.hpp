#pragma once

// `guidedec run | inspect | eval`. Kept header-only so the test suite can
// drive the commands in-process.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "guidedec/cli/backend_spec.hpp"
#include "guidedec/guided_decoder.hpp"
#include "guidedec/metrics.hpp"
#include "guidedec/serialization.hpp"

namespace guidedec::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitBackend = 3;

// ============================================================================
// Task records
// ============================================================================

struct TaskRecord {
  nlohmann::json task_id;
  std::string prompt;
  std::vector<std::string> guide_phrases;
  Strategy strategy = Strategy::kFusionBoost;
  double lambda0 = 0.3;
  std::size_t k = 10;
  std::size_t max_tokens = 90;
  std::uint64_t seed = 0;
  std::size_t samples = 1;

  void validate() const {
    if (prompt.empty()) throw Error("prompt is empty");
    if (guide_phrases.size() > 10) throw Error("at most 10 guide phrases per task");
    if (samples < 1) throw Error("samples must be >= 1");
    if (k < 1) throw Error("k must be >= 1");
    if (max_tokens < 1) throw Error("max_tokens must be >= 1");
    if (!(lambda0 >= 0.0)) throw Error("lambda0 must be >= 0");
  }
};

/// Splits "a, b c, d" into {"a", "b c", "d"}.
inline std::vector<std::string> split_phrases(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    std::string t = trim(cur);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

/// Parses one JSONL task line; missing fields come from `defaults`.
inline TaskRecord parse_task(const std::string& line, const TaskRecord& defaults,
                             std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw Error("task must be a JSON object");
  TaskRecord t = defaults;
  try {
    t.task_id = j.contains("task_id") ? j.at("task_id") : nlohmann::json(line_no);
    t.prompt = j.at("prompt").get<std::string>();
    t.guide_phrases = j.value("guide_phrases", std::vector<std::string>{});
    if (j.contains("strategy")) {
      auto s = parse_strategy(j.at("strategy").get<std::string>());
      if (!s) throw Error("unknown strategy '" + j.at("strategy").get<std::string>() + "'");
      t.strategy = *s;
    }
    t.lambda0 = j.value("lambda0", t.lambda0);
    t.k = j.value("k", t.k);
    t.max_tokens = j.value("max_tokens", t.max_tokens);
    t.seed = j.value("seed", t.seed);
    t.samples = j.value("samples", t.samples);
  } catch (const nlohmann::json::exception& e) {
    throw Error(e.what());
  }
  t.validate();
  return t;
}

inline std::vector<TaskRecord> load_tasks(const std::string& path, const TaskRecord& defaults) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open task file " + path);
  std::vector<TaskRecord> tasks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      tasks.push_back(parse_task(line, defaults, line_no));
    } catch (const Error& e) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (tasks.empty()) throw UsageError("task file " + path + " has no tasks");
  return tasks;
}

// ============================================================================
// Shared option block
// ============================================================================

struct EngineOptions {
  std::string backend;
  std::string ar_backend;
  std::string mlm_backend;
  std::string scorer_backend;
  std::string strategy = "boost";
  double lambda0 = 0.3;
  std::size_t top_k = 10;
  std::size_t max_tokens = 90;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  double penalize_unshared = 0.0;
  bool renormalize_shared = false;
  bool mlm_raw = false;

  void add_backend_flags(CLI::App& app) {
    app.add_option("--backend", backend, "Selector for both models: toy:<path> | remote:<url>");
    app.add_option("--ar-backend", ar_backend, "Autoregressive model selector");
    app.add_option("--mlm-backend", mlm_backend, "Masked model selector (defaults to AR source)");
  }

  void add_decoding_flags(CLI::App& app) {
    app.add_option("--strategy", strategy, "ar | fusion | boost");
    app.add_option("--lambda0", lambda0, "Initial boost shift");
    app.add_option("--top-k", top_k, "Top-K size");
    app.add_option("--temperature", temperature, "Softmax temperature");
    app.add_option("--penalize-unshared", penalize_unshared,
                   "Masked-model score for AR tokens missing from the masked vocabulary");
    app.add_flag("--renormalize-shared", renormalize_shared,
                 "Re-normalize masked scores over shared tokens");
    app.add_flag("--mlm-raw", mlm_raw, "Use masked-model outputs without log-softmax");
  }

  BackendSpec ar_spec() const {
    return resolve_ar_spec(!ar_backend.empty() ? ar_backend : backend);
  }

  BackendSpec mlm_spec() const {
    if (!mlm_backend.empty()) return parse_backend_spec(mlm_backend);
    if (!backend.empty() && ar_backend.empty()) return parse_backend_spec(backend);
    return ar_spec();
  }

  Strategy parsed_strategy() const {
    auto s = parse_strategy(strategy);
    if (!s) throw UsageError("unknown --strategy '" + strategy + "' (expected ar|fusion|boost)");
    return *s;
  }

  DecodingConfig config() const {
    DecodingConfig c;
    c.strategy = parsed_strategy();
    c.lambda0 = lambda0;
    c.k = top_k;
    c.max_new_tokens = max_tokens;
    c.seed = seed;
    c.temperature = temperature;
    c.penalize_unshared = penalize_unshared;
    c.renormalize_shared = renormalize_shared;
    c.mlm_scale = mlm_raw ? MaskedScoreScale::kRaw : MaskedScoreScale::kLogProb;
    try {
      c.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    return c;
  }

  Backends backends(BackendCache& cache, bool need_mlm) const {
    Backends b;
    auto ar = cache.ar(ar_spec());
    b.ar = ar.model;
    b.ar_tokenizer = ar.tokenizer;
    const BackendSpec ms = mlm_spec();
    auto mlm = cache.mlm(ms);
    if (mlm) {
      b.mlm = mlm->model;
      b.mlm_tokenizer = mlm->tokenizer;
    } else if (need_mlm) {
      throw UsageError("missing backend: " + ms.key() + " provides no masked model");
    }
    return b;
  }

  std::shared_ptr<const ScorerModel> scorer(BackendCache& cache) const {
    const BackendSpec spec =
        scorer_backend.empty() ? ar_spec() : parse_backend_spec(scorer_backend);
    return std::make_shared<ChainRuleScorer>(cache.ar(spec).model);
  }
};

inline metrics::RunMeasures measure_run(const GenerationResult& r,
                                        const std::vector<std::string>& phrases,
                                        const ScorerModel* scorer,
                                        const WordNormalizer& normalizer) {
  metrics::RunMeasures m;
  m.ppl = (scorer && !r.generated_ids.empty())
              ? metrics::perplexity(r.generated_ids, *scorer, r.prompt_ids)
              : std::nan("");
  m.rep = metrics::repetition(r.generated_ids, 4);
  auto sr = metrics::success_rate(r.insertion_log, r.generated_text, phrases, normalizer);
  m.sr = sr.rate;
  m.sr_undefined = sr.undefined;
  m.per_phrase = std::move(sr.per_phrase);
  return m;
}

// ============================================================================
// run
// ============================================================================

struct RunOptions : EngineOptions {
  std::string tasks;
  std::string out;
  std::string trace;
  std::string prompt;
  std::string phrases;
  std::size_t samples = 1;
};

inline int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err) {
  TaskRecord defaults;
  defaults.strategy = o.parsed_strategy();
  defaults.lambda0 = o.lambda0;
  defaults.k = o.top_k;
  defaults.max_tokens = o.max_tokens;
  defaults.seed = o.seed;
  defaults.samples = o.samples;

  std::vector<TaskRecord> tasks;
  if (!o.tasks.empty()) {
    tasks = load_tasks(o.tasks, defaults);
  } else {
    if (o.prompt.empty()) throw UsageError("pass --tasks or --prompt");
    TaskRecord t = defaults;
    t.task_id = 0;
    t.prompt = o.prompt;
    t.guide_phrases = split_phrases(o.phrases);
    try {
      t.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    tasks.push_back(std::move(t));
  }

  // Resolve backends before producing any output so a missing backend is
  // reported as a usage error rather than per-record failures.
  BackendCache cache;
  const bool any_guided = std::any_of(tasks.begin(), tasks.end(), [](const TaskRecord& t) {
    return t.strategy != Strategy::kArOnly;
  });
  Backends base = o.backends(cache, any_guided);
  if (base.mlm) {
    base.alignment = std::make_shared<AlignmentMap>(
        build_alignment(base.ar->vocabulary(), base.mlm->vocabulary()));
  }
  auto scorer = o.scorer(cache);

  std::ofstream file_out;
  std::ostream* sink = &out;
  if (!o.out.empty()) {
    file_out.open(o.out, std::ios::binary | std::ios::trunc);
    if (!file_out) throw UsageError("cannot write " + o.out);
    sink = &file_out;
  }
  std::ofstream trace_out;
  if (!o.trace.empty()) {
    trace_out.open(o.trace, std::ios::binary | std::ios::trunc);
    if (!trace_out) throw UsageError("cannot write " + o.trace);
  }

  std::size_t failures = 0;
  for (const auto& task : tasks) {
    DecodingConfig cfg = o.config();
    cfg.strategy = task.strategy;
    cfg.lambda0 = task.lambda0;
    cfg.k = task.k;
    cfg.max_new_tokens = task.max_tokens;

    std::optional<GuidedDecoder> decoder;
    std::optional<Storyline> story;
    std::string setup_error;
    try {
      decoder.emplace(base, cfg);
      story = decoder->make_storyline(task.guide_phrases);
    } catch (const Error& e) {
      setup_error = e.what();
    }

    for (std::size_t sample = 0; sample < task.samples; ++sample) {
      nlohmann::json rec{{"task_id", task.task_id},
                         {"sample_id", sample},
                         {"seed", task.seed + sample},
                         {"strategy", to_string(task.strategy)},
                         {"lambda0", task.lambda0},
                         {"k", task.k},
                         {"max_tokens", task.max_tokens}};
      if (!setup_error.empty()) {
        rec["error"] = setup_error;
        ++failures;
        *sink << rec.dump() << '\n';
        continue;
      }
      DecodingConfig sample_cfg = cfg;
      sample_cfg.seed = task.seed + sample;
      GuidedDecoder dec(base, sample_cfg);
      try {
        GenerationResult r = dec.generate(task.prompt, *story, !o.trace.empty());
        const auto m = measure_run(r, task.guide_phrases, scorer.get(),
                                   *dec.backends().normalizer);
        rec["text"] = r.text;
        rec["generated_text"] = r.generated_text;
        rec["prompt_ids"] = r.prompt_ids;
        rec["token_ids"] = r.generated_ids;
        rec["insertion_log"] = to_json(r.insertion_log);
        rec["unmet_phrases"] = r.unmet_phrases;
        rec["stop_reason"] = to_string(r.stop_reason);
        rec["measures"] = to_json(m);
        if (trace_out) {
          for (const auto& d : r.trace) {
            auto line = to_json(d, dec.backends().ar->vocabulary());
            line["task_id"] = task.task_id;
            line["sample_id"] = sample;
            trace_out << line.dump() << '\n';
          }
        }
      } catch (const GenerationError& e) {
        rec["error"] = e.what();
        rec["partial_text"] = e.partial().text;
        ++failures;
      } catch (const Error& e) {
        rec["error"] = e.what();
        ++failures;
      }
      *sink << rec.dump() << '\n';
    }
  }
  sink->flush();
  if (failures) err << failures << " record(s) failed; see \"error\" fields\n";
  return kExitOk;
}

// ============================================================================
// inspect
// ============================================================================

struct InspectOptions : EngineOptions {
  std::string context;
  std::string phrase;
  std::size_t top_n = 10;
  std::size_t step = 1;
  std::size_t last_insertion = 0;
  std::size_t dump_top = 0;
  std::string csv;
};

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline int cmd_inspect(const InspectOptions& o, std::ostream& out, std::ostream& err) {
  (void)err;
  if (o.phrase.empty()) throw UsageError("--phrase is required");
  BackendCache cache;
  DecodingConfig cfg = o.config();
  cfg.strategy = Strategy::kFusionBoost;
  cfg.trace_top_n = o.top_n;

  Backends b;
  try {
    b = o.backends(cache, true);
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    err << "backend failure: " << e.what() << '\n';
    return kExitBackend;
  }
  GuidedDecoder dec(b, cfg);
  const TokenIds ctx = b.ar_tokenizer->encode(o.context);
  if (ctx.empty()) throw UsageError("context must contain at least one token");
  if (o.step <= o.last_insertion) throw UsageError("--step must exceed --last-insertion");
  const Storyline story = dec.make_storyline({o.phrase});

  GenerationState state = dec.start(ctx);
  // The boost strength depends only on step - last insertion.
  state.step_i = o.step - 1;
  state.last_insertion_step_i_n = o.last_insertion;

  StepPlan p;
  ScoreVector mlm_raw;
  try {
    p = dec.plan(state, story);
    const TokenIds left = dec.backends().ar->vocabulary() == dec.backends().mlm->vocabulary()
                              ? ctx
                              : b.mlm_tokenizer->encode(o.context);
    mlm_raw = masked_score(*b.mlm, left, story[0].mlm_token_ids, cfg.mlm_scale);
  } catch (const Error& e) {
    err << "backend failure: " << e.what() << '\n';
    return kExitBackend;
  }
  const auto& av = b.ar->vocabulary();
  const auto& mv = b.mlm->vocabulary();
  const auto& alignment = *dec.backends().alignment;

  if (o.dump_top > 0) {
    // Shared tokens sorted by AR score, best first.
    TokenIds ids;
    for (std::size_t a = 0; a < av.size(); ++a) {
      if (alignment.table()[a] != AlignmentMap::kUnmapped) ids.push_back(static_cast<TokenId>(a));
    }
    std::stable_sort(ids.begin(), ids.end(), [&](TokenId x, TokenId y) {
      return ranks_before(p.ar, x, y);
    });
    if (ids.size() > o.dump_top) ids.resize(o.dump_top);
    std::ofstream file;
    std::ostream* sink = &out;
    if (!o.csv.empty()) {
      file.open(o.csv, std::ios::binary | std::ios::trunc);
      if (!file) throw UsageError("cannot write " + o.csv);
      sink = &file;
    }
    *sink << "rank,token_id,token,ar_score,mlm_score,fused_score\n";
    char buf[128];
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const auto i = static_cast<std::size_t>(ids[r]);
      std::snprintf(buf, sizeof buf, ",%.9g,%.9g,%.9g\n", p.ar[i], (*p.mlm_projected)[i],
                    p.fused[i]);
      *sink << (r + 1) << ',' << ids[r] << ',' << csv_field(av.token(ids[r])) << buf;
    }
    if (o.csv.empty()) return kExitOk;
  }

  // Top-N by each score, side by side.
  const std::size_t n = std::min({o.top_n, av.size()});
  const TokenIds by_ar = top_k_ids(p.ar, n);
  const TokenIds by_mlm = top_k_ids(mlm_raw, std::min(n, mv.size()));
  const TokenIds by_fused = top_k_ids(p.fused, n);
  char line[512];
  std::snprintf(line, sizeof line, "%-4s %-20s %10s | %-20s %10s | %-20s %10s\n", "rank",
                "ar token", "score", "mlm token", "score", "fused token", "score");
  out << line;
  for (std::size_t r = 0; r < n; ++r) {
    std::string mt = "", ms = "";
    if (r < by_mlm.size()) {
      mt = mv.token(by_mlm[r]);
      char b2[32];
      std::snprintf(b2, sizeof b2, "%.3f", mlm_raw[static_cast<std::size_t>(by_mlm[r])]);
      ms = b2;
    }
    std::snprintf(line, sizeof line, "%-4zu %-20s %10.3f | %-20s %10s | %-20s %10.3f\n", r + 1,
                  av.token(by_ar[r]).c_str(), p.ar[static_cast<std::size_t>(by_ar[r])],
                  mt.c_str(), ms.c_str(), av.token(by_fused[r]).c_str(),
                  p.fused[static_cast<std::size_t>(by_fused[r])]);
    out << line;
  }

  out << "\ncandidates after boost (top-" << cfg.k << " sampling set marked *)\n";
  std::snprintf(line, sizeof line, "%-4s %-20s %10s %10s %10s %8s\n", "rank", "token", "ar",
                "mlm", "fused", "p");
  out << line;
  std::map<TokenId, double> prob;
  for (const auto& c : p.distribution) prob[c.id] = c.probability;
  const TokenIds by_final = top_k_ids(p.final_scores, n);
  for (std::size_t r = 0; r < by_final.size(); ++r) {
    const auto i = static_cast<std::size_t>(by_final[r]);
    const auto it = prob.find(by_final[r]);
    std::snprintf(line, sizeof line, "%-4zu %-20s %10.3f %10.3f %10.3f %8.4f%s\n", r + 1,
                  av.token(by_final[r]).c_str(), p.ar[i], (*p.mlm_projected)[i],
                  p.final_scores[i], it == prob.end() ? 0.0 : it->second,
                  it == prob.end() ? "" : " *");
    out << line;
  }
  if (p.boost) {
    const auto& bb = *p.boost;
    std::snprintf(line, sizeof line,
                  "\nboost %s (id %d): lambda=%.4f alpha=%.4f delta=%.4f s_K=%.4f "
                  "s_min=%.4f s_max=%.4f score %.4f -> %.4f%s\n",
                  av.token(bb.token).c_str(), bb.token, bb.lambda, bb.alpha, bb.delta, bb.s_k,
                  bb.s_min, bb.s_max, bb.pre_boost, bb.post_boost,
                  bb.applied() ? "" : " (natural score kept)");
    out << line;
  }
  return kExitOk;
}

// ============================================================================
// eval
// ============================================================================

struct EvalOptions {
  std::string outputs;
  std::string tasks;
  std::string scorer_backend;
  std::string report_json;
  std::string rep_level = "token";
  std::size_t ngram = 4;
};

inline int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  if (o.rep_level != "token" && o.rep_level != "word") {
    throw UsageError("--rep-level must be token or word");
  }
  const auto tasks = load_tasks(o.tasks, TaskRecord{});
  std::map<std::string, const TaskRecord*> by_id;
  for (const auto& t : tasks) by_id[t.task_id.dump()] = &t;

  std::shared_ptr<const ScorerModel> scorer;
  BackendCache cache;
  if (!o.scorer_backend.empty()) {
    try {
      scorer = std::make_shared<ChainRuleScorer>(cache.ar(parse_backend_spec(o.scorer_backend)).model);
    } catch (const UsageError&) {
      throw;
    } catch (const Error& e) {
      err << "backend failure: " << e.what() << '\n';
      return kExitBackend;
    }
  }

  std::ifstream in(o.outputs);
  if (!in) throw UsageError("cannot open outputs file " + o.outputs);
  const CaseFoldNormalizer normalizer;
  metrics::Report report;
  std::size_t records = 0, skipped = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = o.outputs + ":" + std::to_string(line_no) + ": ";
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(where + "invalid JSON");
    }
    ++records;
    const auto tid = rec.contains("task_id") ? rec.at("task_id").dump() : std::string("null");
    auto it = by_id.find(tid);
    if (it == by_id.end()) throw UsageError(where + "task_id " + tid + " not in task file");
    if (rec.contains("error")) {
      ++skipped;
      continue;
    }
    try {
      const TaskRecord& task = *it->second;
      const auto strategy = parse_strategy(rec.value("strategy", std::string(to_string(task.strategy))));
      if (!strategy) throw Error("unknown strategy");
      const double lambda0 = rec.value("lambda0", task.lambda0);
      const TokenIds ids = rec.at("token_ids").get<TokenIds>();
      const std::string text = rec.at("generated_text").get<std::string>();

      metrics::RunMeasures m;
      m.rep = o.rep_level == "token" ? metrics::repetition(ids, o.ngram)
                                     : metrics::word_repetition(text, o.ngram);
      auto sr = metrics::success_rate(insertion_log_from_json(rec.at("insertion_log")), text,
                                      task.guide_phrases, normalizer);
      m.sr = sr.rate;
      m.sr_undefined = sr.undefined;
      if (scorer && !ids.empty()) {
        m.ppl = metrics::perplexity(ids, *scorer, rec.at("prompt_ids").get<TokenIds>());
      } else if (rec.contains("measures") && rec["measures"].contains("ppl") &&
                 rec["measures"]["ppl"].is_number()) {
        m.ppl = rec["measures"]["ppl"].get<double>();
      } else {
        m.ppl = std::nan("");
      }
      report.add(*strategy, lambda0, m);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(where + "malformed record: " + e.what());
    } catch (const BackendError& e) {
      err << "backend failure: " << e.what() << '\n';
      return kExitBackend;
    } catch (const Error& e) {
      throw UsageError(where + e.what());
    }
  }
  if (records == 0) throw UsageError("outputs file " + o.outputs + " is empty");
  if (report.empty()) throw UsageError("no successful records to evaluate");

  out << report.render_table();
  if (skipped) out << skipped << " failed record(s) skipped\n";
  if (!o.report_json.empty()) {
    std::ofstream f(o.report_json, std::ios::binary | std::ios::trunc);
    if (!f) throw UsageError("cannot write " + o.report_json);
    f << report.to_json().dump(2) << '\n';
  }
  return kExitOk;
}

// ============================================================================
// Entry point
// ============================================================================

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Guided decoding through a sequence of guide phrases", "guidedec"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Generate texts for tasks");
  run_cmd->add_option("--tasks", run.tasks, "JSONL task file");
  run_cmd->add_option("--out", run.out, "Output JSONL (default stdout)");
  run_cmd->add_option("--trace", run.trace, "Write per-step diagnostics JSONL here");
  run_cmd->add_option("--prompt", run.prompt, "Inline prompt");
  run_cmd->add_option("--phrases", run.phrases, "Inline comma-separated guide phrases");
  run_cmd->add_option("--samples", run.samples, "Samples per task");
  run_cmd->add_option("--max-tokens", run.max_tokens, "Generated-token budget");
  run_cmd->add_option("--seed", run.seed, "Base seed; sample j uses seed + j");
  run_cmd->add_option("--scorer-backend", run.scorer_backend, "Perplexity scorer selector");
  run.add_backend_flags(*run_cmd);
  run.add_decoding_flags(*run_cmd);

  InspectOptions ins;
  auto* ins_cmd = app.add_subcommand("inspect", "Show fused/boosted scores for one step");
  ins_cmd->add_option("--context", ins.context, "Text to the left of the mask")->required();
  ins_cmd->add_option("--phrase", ins.phrase, "Pending guide phrase")->required();
  ins_cmd->add_option("--top-n", ins.top_n, "Rows to print");
  ins_cmd->add_option("--step", ins.step, "Generation step i");
  ins_cmd->add_option("--last-insertion", ins.last_insertion, "Step i_n of the last insertion");
  ins_cmd->add_option("--dump-top", ins.dump_top, "Dump the top-N shared tokens as CSV");
  ins_cmd->add_option("--csv", ins.csv, "CSV destination (default stdout)");
  ins.add_backend_flags(*ins_cmd);
  ins.add_decoding_flags(*ins_cmd);

  EvalOptions ev;
  auto* ev_cmd = app.add_subcommand("eval", "Aggregate PPL / Rep / SR over run outputs");
  ev_cmd->add_option("--outputs", ev.outputs, "JSONL produced by `run`")->required();
  ev_cmd->add_option("--tasks", ev.tasks, "Originating task file")->required();
  ev_cmd->add_option("--scorer-backend", ev.scorer_backend, "Recompute PPL with this model");
  ev_cmd->add_option("--report-json", ev.report_json, "Also write the report as JSON");
  ev_cmd->add_option("--rep-level", ev.rep_level, "token | word");
  ev_cmd->add_option("--ngram", ev.ngram, "n for the repetition measure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run, out, err);
    if (*ins_cmd) return cmd_inspect(ins, out, err);
    if (*ev_cmd) return cmd_eval(ev, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const BackendError& e) {
    err << "backend failure: " << e.what() << '\n';
    return kExitBackend;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace guidedec::cli
