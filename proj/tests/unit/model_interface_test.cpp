#include <cmath>
#include <functional>
#include <memory>

#include <gtest/gtest.h>

#include "guidedec/model_interface.hpp"
#include "guidedec/reference/table_models.hpp"
#include "support/fixtures.hpp"

using namespace guidedec;

namespace {

class RawLogitModel final : public AutoregressiveModel {
 public:
  explicit RawLogitModel(ScoreVector logits) : logits_(std::move(logits)), vocab_{"a", "b", "c"} {}
  const Vocabulary& vocabulary() const override { return vocab_; }
  ScoreVector score(std::span<const TokenId>) const override { return logits_; }
  bool normalized() const override { return false; }

 private:
  ScoreVector logits_;
  Vocabulary vocab_;
};

}  // namespace

TEST(LogSoftmax, MatchesDirectFormula) {
  const ScoreVector logits{1.0, 2.0, 3.0};
  const auto out = log_softmax(logits);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out[i], logits[i] - std::log(z), 1e-12);
}

TEST(LogSoftmax, StableForLargeLogits) {
  const auto out = log_softmax(ScoreVector{1000.0, 1000.0});
  EXPECT_NEAR(out[0], -std::log(2.0), 1e-12);
  EXPECT_THROW(log_softmax(ScoreVector{1.0, NAN}), Error);
  EXPECT_THROW(log_softmax(ScoreVector{}), Error);
}

TEST(LogProbScore, NormalizesRawLogits) {
  RawLogitModel m(ScoreVector{0.0, 0.0, std::log(2.0)});
  const TokenIds ctx{0};
  const auto s = log_prob_score(m, ctx);
  EXPECT_NEAR(s[2], std::log(0.5), 1e-12);
  EXPECT_NEAR(s[0], std::log(0.25), 1e-12);
}

TEST(LogProbScore, RejectsBadInput) {
  RawLogitModel m(ScoreVector{0.0, 0.0});
  const TokenIds ctx{0};
  EXPECT_THROW(log_prob_score(m, ctx), Error);  // wrong length
  RawLogitModel ok(ScoreVector{0.0, 0.0, 0.0});
  const TokenIds bad{7};
  EXPECT_THROW(log_prob_score(ok, bad), Error);
}

TEST(MaskedScore, RawScaleLeavesValues) {
  auto m = reference::TableMLMModel::uniform(Vocabulary{"a", "b"});
  const TokenIds l{0}, r{1};
  const auto lp = masked_score(m, l, r, MaskedScoreScale::kLogProb);
  EXPECT_NEAR(lp[0], std::log(0.5), 1e-12);
  const auto raw = masked_score(m, l, r, MaskedScoreScale::kRaw);
  EXPECT_NEAR(raw[1], std::log(0.5), 1e-12);
}

TEST(SequenceLogProb, EmptySequenceIsAnError) {
  auto f = test_support::load_fixture("toy4.json");
  ChainRuleScorer scorer(f.ar);
  try {
    sequence_log_prob(scorer, TokenIds{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "empty sequence");
  }
}

TEST(SequenceLogProb, SingleTokenIsUnconditionalLookup) {
  auto f = test_support::load_fixture("toy4.json");
  ChainRuleScorer scorer(f.ar);
  EXPECT_NEAR(sequence_log_prob(scorer, TokenIds{0}), std::log(0.4), 1e-12);
}

// Independent oracle: multiply the fixture table entries by hand.
TEST(SequenceLogProb, EqualsChainOfTableLookupsExhaustively) {
  auto f = test_support::load_fixture("toy4.json");
  ChainRuleScorer scorer(f.ar);
  const double table[5][4] = {{0.4, 0.3, 0.2, 0.1},
                              {0.1, 0.5, 0.3, 0.1},
                              {0.3, 0.1, 0.4, 0.2},
                              {0.25, 0.25, 0.1, 0.4},
                              {0.5, 0.2, 0.2, 0.1}};
  std::size_t checked = 0;
  std::function<void(TokenIds&)> walk = [&](TokenIds& seq) {
    if (!seq.empty()) {
      double lp = 0.0;
      for (std::size_t j = 0; j < seq.size(); ++j) {
        const int row = j == 0 ? 0 : seq[j - 1] + 1;
        lp += std::log(table[row][seq[j]]);
      }
      EXPECT_NEAR(sequence_log_prob(scorer, seq), lp, 1e-12);
      ++checked;
    }
    if (seq.size() == 4) return;
    for (TokenId t = 0; t < 4; ++t) {
      seq.push_back(t);
      walk(seq);
      seq.pop_back();
    }
  };
  TokenIds seq;
  walk(seq);
  EXPECT_EQ(checked, 4u + 16u + 64u + 256u);
}

TEST(ChainRuleScorer, ConditionsOnContext) {
  auto f = test_support::load_fixture("toy4.json");
  ChainRuleScorer scorer(f.ar);
  const TokenIds ctx{0}, ids{1, 2};
  EXPECT_NEAR(scorer.conditional_log_prob(ctx, ids), std::log(0.5) + std::log(0.4), 1e-12);
}
