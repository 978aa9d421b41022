#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "guidedec/vocab_align.hpp"

using namespace guidedec;

TEST(Alignment, MatchesExactStrings) {
  const Vocabulary ar{"the", "cat", "Cat", "##s"};
  const Vocabulary mlm{"[MASK]", "cat", "the", "dog"};
  const auto map = build_alignment(ar, mlm);
  EXPECT_EQ(map.shared_count(), 2u);
  EXPECT_EQ(map.lookup(0), TokenId{2});
  EXPECT_EQ(map.lookup(1), TokenId{1});
  EXPECT_FALSE(map.lookup(2).has_value());  // case differs
  EXPECT_FALSE(map.lookup(3).has_value());
  EXPECT_FALSE(map.is_identity());
  EXPECT_THROW(map.lookup(4), Error);
}

TEST(Alignment, IdentityForEqualVocabularies) {
  const Vocabulary v{"a", "b", "c"};
  const auto map = build_alignment(v, v);
  EXPECT_TRUE(map.is_identity());
  EXPECT_EQ(map.shared_count(), 3u);
}

TEST(Alignment, SharedCountIsSymmetric) {
  std::mt19937 gen(3);
  std::uniform_int_distribution<int> tok(0, 30);
  for (int trial = 0; trial < 200; ++trial) {
    std::set<std::string> a, b;
    for (int i = 0; i < 12; ++i) a.insert("t" + std::to_string(tok(gen)));
    for (int i = 0; i < 15; ++i) b.insert("t" + std::to_string(tok(gen)));
    const Vocabulary va(std::vector<std::string>(a.begin(), a.end()));
    const Vocabulary vb(std::vector<std::string>(b.begin(), b.end()));
    std::size_t common = 0;
    for (const auto& s : a) common += b.count(s);
    EXPECT_EQ(build_alignment(va, vb).shared_count(), common);
    EXPECT_EQ(build_alignment(vb, va).shared_count(), common);
  }
}

TEST(Alignment, RejectsNonInjectiveTables) {
  EXPECT_THROW(AlignmentMap({0, 0}, 2), Error);
  EXPECT_THROW(AlignmentMap({0, 5}, 2), Error);
  EXPECT_THROW(build_alignment(Vocabulary{}, Vocabulary{"a"}), Error);
}

TEST(ProjectScores, RelabelsAndFills) {
  const auto map = build_alignment(Vocabulary{"x", "y", "z"}, Vocabulary{"z", "x"});
  const ScoreVector mlm{-1.0, -2.0};
  const auto p = project_scores(mlm, map, -50.0);
  EXPECT_EQ(p.size(), 3u);
  EXPECT_DOUBLE_EQ(p[0], -2.0);
  EXPECT_DOUBLE_EQ(p[1], -50.0);
  EXPECT_DOUBLE_EQ(p[2], -1.0);
  EXPECT_DOUBLE_EQ(project_scores(mlm, map)[1], 0.0);
}

TEST(ProjectScores, SizeMismatch) {
  const auto map = build_alignment(Vocabulary{"x"}, Vocabulary{"x", "y"});
  try {
    project_scores(ScoreVector{0.0}, map);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "score/vocabulary size mismatch");
  }
}

TEST(RenormalizeShared, SharedMassSumsToOne) {
  const auto map = build_alignment(Vocabulary{"a", "b"}, Vocabulary{"a", "q", "b"});
  const ScoreVector mlm{std::log(0.2), std::log(0.6), std::log(0.2)};
  const auto r = renormalize_shared(mlm, map);
  EXPECT_NEAR(std::exp(r[0]) + std::exp(r[2]), 1.0, 1e-12);
  EXPECT_NEAR(r[0], std::log(0.5), 1e-12);
  EXPECT_DOUBLE_EQ(r[1], mlm[1]);
}
