#pragma once

// Deterministic table-driven backends for desk-scale verification.

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "guidedec/model_interface.hpp"
#include "guidedec/tokenizer.hpp"

namespace guidedec::reference {

/// Probabilities below this are treated as this value on the log scale so
/// every score stays finite.
inline constexpr double kProbabilityFloor = 1e-30;

using ProbabilityRow = std::vector<double>;

inline void check_row(const ProbabilityRow& row, std::size_t n, const std::string& where) {
  if (row.size() != n) {
    throw Error(where + ": row has " + std::to_string(row.size()) + " entries, expected " +
                std::to_string(n));
  }
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error(where + ": negative or non-finite entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(where + ": row does not sum to 1");
}

inline ScoreVector row_log_probs(const ProbabilityRow& row) {
  ScoreVector s(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) s[i] = std::log(std::max(row[i], kProbabilityFloor));
  return s;
}

/// n-gram style table model: the last `order` context tokens select a row.
/// Contexts shorter than `order` use their full length as the key.
class TableARModel final : public AutoregressiveModel {
 public:
  TableARModel(Vocabulary vocab, std::size_t order, std::map<TokenIds, ProbabilityRow> rows,
               std::optional<ProbabilityRow> default_row = std::nullopt,
               std::optional<TokenId> eos = std::nullopt)
      : vocab_(std::move(vocab)), order_(order), rows_(std::move(rows)),
        default_(std::move(default_row)), eos_(eos) {
    if (vocab_.empty()) throw Error("table model needs a vocabulary");
    if (order_ > 2) throw Error("table model order must be 0, 1 or 2");
    for (const auto& [key, row] : rows_) {
      if (key.size() > order_) throw Error("table row key longer than model order");
      check_ids(key, vocab_.size());
      check_row(row, vocab_.size(), "AR table");
    }
    if (default_) check_row(*default_, vocab_.size(), "AR default row");
    if (eos_ && !vocab_.contains(*eos_)) throw Error("eos id out of range");
  }

  static TableARModel uniform(Vocabulary vocab) {
    const std::size_t n = vocab.size();
    return TableARModel(std::move(vocab), 0, {{TokenIds{}, ProbabilityRow(n, 1.0 / double(n))}});
  }

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::optional<TokenId> eos_id() const override { return eos_; }
  std::size_t order() const noexcept { return order_; }

  const ProbabilityRow& row_for(std::span<const TokenId> context) const {
    const std::size_t n = std::min(order_, context.size());
    TokenIds key(context.end() - static_cast<std::ptrdiff_t>(n), context.end());
    auto it = rows_.find(key);
    if (it != rows_.end()) return it->second;
    if (default_) return *default_;
    throw BackendError("table model has no row for the given context");
  }

  ScoreVector score(std::span<const TokenId> context) const override {
    check_ids(context, vocab_.size());
    return row_log_probs(row_for(context));
  }

 private:
  Vocabulary vocab_;
  std::size_t order_;
  std::map<TokenIds, ProbabilityRow> rows_;
  std::optional<ProbabilityRow> default_;
  std::optional<TokenId> eos_;
};

/// Masked model keyed by (last left token, first right token); a missing
/// side is keyed as -1.
class TableMLMModel final : public MaskedModel {
 public:
  using Key = std::pair<TokenId, TokenId>;
  static constexpr TokenId kNone = -1;

  TableMLMModel(Vocabulary vocab, std::map<Key, ProbabilityRow> rows,
                std::optional<ProbabilityRow> default_row)
      : vocab_(std::move(vocab)), rows_(std::move(rows)), default_(std::move(default_row)) {
    for (const auto& [key, row] : rows_) check_row(row, vocab_.size(), "MLM table");
    if (default_) check_row(*default_, vocab_.size(), "MLM default row");
  }

  static TableMLMModel uniform(Vocabulary vocab) {
    const std::size_t n = vocab.size();
    return TableMLMModel(std::move(vocab), {}, ProbabilityRow(n, 1.0 / double(n)));
  }

  const Vocabulary& vocabulary() const override { return vocab_; }

  const ProbabilityRow& row_for(std::span<const TokenId> left,
                                std::span<const TokenId> right) const {
    Key key{left.empty() ? kNone : left.back(), right.empty() ? kNone : right.front()};
    auto it = rows_.find(key);
    if (it != rows_.end()) return it->second;
    if (default_) return *default_;
    throw BackendError("masked table model has no row for the given context");
  }

  ScoreVector score_masked(std::span<const TokenId> left,
                           std::span<const TokenId> right) const override {
    check_ids(left, vocab_.size());
    check_ids(right, vocab_.size());
    return row_log_probs(row_for(left, right));
  }

 private:
  Vocabulary vocab_;
  std::map<Key, ProbabilityRow> rows_;
  std::optional<ProbabilityRow> default_;
};

// ============================================================================
// JSON fixtures
// ============================================================================

/// Toy backends loaded from one JSON file:
///
///   {
///     "vocab": ["A", "B", ...],
///     "eos": "B",                                   (optional)
///     "ar":  {"order": 1, "rows": {"": [...], "A": [...]}, "default": [...]},
///     "mlm": {"vocab": [...], "unk": "<unk>",        (both optional)
///             "rows": {"A|B": [...], "|B": [...]}, "default": [...]}
///   }
///
/// AR row keys are space-joined context tokens; MLM keys are
/// "<last left token>|<first right token>" with either side possibly empty.
struct ToyFixture {
  std::shared_ptr<const TableARModel> ar;
  std::shared_ptr<const WordTokenizer> ar_tokenizer;
  std::shared_ptr<const TableMLMModel> mlm;           // null when absent
  std::shared_ptr<const WordTokenizer> mlm_tokenizer;  // null when absent

  static ToyFixture from_json(const nlohmann::json& j) {
    try {
      return parse(j);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("malformed toy fixture: ") + e.what());
    }
  }

  static ToyFixture load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open toy fixture " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error("malformed toy fixture " + path + ": " + e.what());
    }
    return from_json(j);
  }

 private:
  static ProbabilityRow row(const nlohmann::json& j) { return j.get<ProbabilityRow>(); }

  static TokenId id_of(const Vocabulary& v, const std::string& tok) {
    auto id = v.find(tok);
    if (!id) throw Error("toy fixture refers to unknown token '" + tok + "'");
    return *id;
  }

  static ToyFixture parse(const nlohmann::json& j) {
    ToyFixture f;
    Vocabulary vocab = Vocabulary::from_json(j.at("vocab"));
    std::optional<TokenId> eos;
    if (j.contains("eos") && !j.at("eos").is_null()) {
      eos = id_of(vocab, j.at("eos").get<std::string>());
    }

    const auto& ar = j.at("ar");
    std::map<TokenIds, ProbabilityRow> rows;
    if (ar.contains("rows")) {
      for (const auto& [key, value] : ar.at("rows").items()) {
        TokenIds ids;
        for (const auto& w : split_words(key)) ids.push_back(id_of(vocab, w));
        rows.emplace(std::move(ids), row(value));
      }
    }
    std::optional<ProbabilityRow> ar_default;
    if (ar.contains("default")) ar_default = row(ar.at("default"));
    f.ar = std::make_shared<TableARModel>(vocab, ar.value("order", std::size_t{1}),
                                          std::move(rows), std::move(ar_default), eos);
    f.ar_tokenizer = std::make_shared<WordTokenizer>(vocab);

    if (j.contains("mlm")) {
      const auto& mj = j.at("mlm");
      Vocabulary mvocab = mj.contains("vocab") ? Vocabulary::from_json(mj.at("vocab")) : vocab;
      std::optional<std::string> unk;
      if (mj.contains("unk")) unk = mj.at("unk").get<std::string>();
      std::map<TableMLMModel::Key, ProbabilityRow> mrows;
      if (mj.contains("rows")) {
        for (const auto& [key, value] : mj.at("rows").items()) {
          auto bar = key.find('|');
          if (bar == std::string::npos) throw Error("MLM row key '" + key + "' lacks '|'");
          const std::string l = trim(key.substr(0, bar)), r = trim(key.substr(bar + 1));
          TableMLMModel::Key k{l.empty() ? TableMLMModel::kNone : id_of(mvocab, l),
                               r.empty() ? TableMLMModel::kNone : id_of(mvocab, r)};
          mrows.emplace(k, row(value));
        }
      }
      std::optional<ProbabilityRow> mdefault;
      if (mj.contains("default")) mdefault = row(mj.at("default"));
      f.mlm_tokenizer = std::make_shared<WordTokenizer>(mvocab, unk);
      f.mlm = std::make_shared<TableMLMModel>(std::move(mvocab), std::move(mrows),
                                              std::move(mdefault));
    }
    return f;
  }
};

}  // namespace guidedec::reference
