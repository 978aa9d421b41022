#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "guidedec/tokenizer.hpp"

using namespace guidedec;

namespace {

std::string mapped(unsigned char b) {
  std::string s;
  utf8::append(s, bbpe::byte_to_unicode()[b]);
  return s;
}

// All 256 byte symbols plus a handful of merges.
ByteLevelBpeTokenizer small_bpe() {
  std::vector<std::string> tokens;
  for (int b = 0; b < 256; ++b) tokens.push_back(mapped(static_cast<unsigned char>(b)));
  const std::string sp = mapped(' ');
  const std::vector<std::string> merges = {sp + " c", "a t", sp + "c at", sp + " s",
                                           sp + "s at", sp + " t", "h e", sp + "t he"};
  for (const auto& m : merges) {
    const auto space = m.find(' ');
    tokens.push_back(m.substr(0, space) + m.substr(space + 1));
  }
  return ByteLevelBpeTokenizer(Vocabulary(tokens), merges);
}

}  // namespace

TEST(WordTokenizer, EncodeDecode) {
  WordTokenizer tok(Vocabulary{"the", "cat", "sat"});
  EXPECT_EQ(tok.encode("the  cat\tsat"), (TokenIds{0, 1, 2}));
  const TokenIds ids{2, 0};
  EXPECT_EQ(tok.decode(ids), "sat the");
  EXPECT_EQ(tok.continuation_prefix(), "");
  EXPECT_THROW(tok.encode("dog"), Error);
}

TEST(WordTokenizer, UnknownToken) {
  WordTokenizer tok(Vocabulary{"<unk>", "a"}, "<unk>");
  EXPECT_EQ(tok.encode("a b"), (TokenIds{1, 0}));
  EXPECT_THROW(WordTokenizer(Vocabulary{"a"}, "<unk>"), Error);
}

TEST(ByteLevel, ByteMapIsBijective) {
  const auto& fwd = bbpe::byte_to_unicode();
  const auto& back = bbpe::unicode_to_byte();
  EXPECT_EQ(back.size(), 256u);
  for (int b = 0; b < 256; ++b) EXPECT_EQ(back.at(fwd[b]), b);
  EXPECT_EQ(fwd[' '], U'Ġ');
  EXPECT_EQ(fwd['a'], U'a');
}

TEST(ByteLevel, Pretokenize) {
  EXPECT_EQ(bbpe::pretokenize("Hello world"), (std::vector<std::string>{"Hello", " world"}));
  EXPECT_EQ(bbpe::pretokenize("it's 42!"), (std::vector<std::string>{"it", "'s", " 42", "!"}));
  EXPECT_EQ(bbpe::pretokenize("a   b"), (std::vector<std::string>{"a", "  ", " b"}));
  EXPECT_EQ(bbpe::pretokenize("a\n b"), (std::vector<std::string>{"a", "\n", " b"}));
  EXPECT_EQ(bbpe::pretokenize("end  "), (std::vector<std::string>{"end", "  "}));
  EXPECT_EQ(bbpe::pretokenize(" Москва"), (std::vector<std::string>{" Москва"}));
}

TEST(ByteLevelBpe, AppliesRankedMerges) {
  const auto tok = small_bpe();
  const auto& v = tok.vocabulary();
  const std::string sp = mapped(' ');
  EXPECT_EQ(tok.encode(" cat"), (TokenIds{*v.find(sp + "cat")}));
  EXPECT_EQ(tok.encode_continuation("the cat sat"),
            (TokenIds{*v.find(sp + "the"), *v.find(sp + "cat"), *v.find(sp + "sat")}));
  // "at" merges even without a leading space.
  EXPECT_EQ(tok.encode("bat"), (TokenIds{*v.find("b"), *v.find("at")}));
}

TEST(ByteLevelBpe, RejectsMalformedMerges) {
  EXPECT_THROW(ByteLevelBpeTokenizer(Vocabulary{"a"}, {"ab"}), Error);
  EXPECT_NO_THROW(ByteLevelBpeTokenizer(Vocabulary{"a"}, {"#version: 0.2"}));
}

TEST(ByteLevelBpe, RoundTripsRandomText) {
  const auto tok = small_bpe();
  const std::vector<std::string> pieces = {"the", " ", "cat", "  ", "sat", "\n", "!", "'s",
                                           "Ж", "é", "42", "\t", "at", "'", "😀", "x"};
  std::mt19937 gen(7);
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1), len(0, 15);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text;
    const std::size_t n = len(gen);
    for (std::size_t i = 0; i < n; ++i) text += pieces[pick(gen)];
    EXPECT_EQ(tok.decode(tok.encode(text)), text);
  }
}

TEST(GuidePhrase, WordTokenizerFields) {
  WordTokenizer tok(Vocabulary{"the", "Dog", "park", "."});
  CaseFoldNormalizer norm;
  const auto p = make_guide_phrase("  Dog   park ", tok, norm);
  EXPECT_EQ(p.surface, "Dog park");
  EXPECT_EQ(p.token_ids, (TokenIds{1, 2}));
  EXPECT_EQ(p.first_token_id, 1);
  EXPECT_EQ(p.normalized_first_word, "dog");
  EXPECT_EQ(p.tail_token_ids, (TokenIds{2}));
  EXPECT_EQ(p.mlm_token_ids, p.token_ids);
  EXPECT_EQ(tok.decode(p.token_ids), p.surface);
}

TEST(GuidePhrase, BpeRoundTripWithContinuationPrefix) {
  const auto tok = small_bpe();
  CaseFoldNormalizer norm;
  const auto p = make_guide_phrase("cat sat", tok, norm);
  EXPECT_EQ(tok.decode(p.token_ids), " cat sat");
  EXPECT_EQ(p.token_ids.size(), 2u);
  EXPECT_EQ(p.tail_token_ids, tok.encode(" sat"));
}

TEST(GuidePhrase, Errors) {
  WordTokenizer tok(Vocabulary{"a"});
  CaseFoldNormalizer norm;
  EXPECT_THROW(make_guide_phrase("   ", tok, norm), Error);
  EXPECT_THROW(make_guide_phrase("b", tok, norm), Error);
}

TEST(GuidePhrase, SeparateMaskedTokenizer) {
  WordTokenizer ar(Vocabulary{"x", "dog"});
  WordTokenizer mlm(Vocabulary{"dog", "y", "x"});
  CaseFoldNormalizer norm;
  const auto p = make_guide_phrase("dog", ar, norm, &mlm);
  EXPECT_EQ(p.token_ids, (TokenIds{1}));
  EXPECT_EQ(p.mlm_token_ids, (TokenIds{0}));
}

TEST(Storyline, KeepsOrder) {
  WordTokenizer tok(Vocabulary{"a", "b", "c"});
  CaseFoldNormalizer norm;
  const auto s = make_storyline({"c", "a b"}, tok, norm);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].first_token_id, 2);
  EXPECT_EQ(s[1].first_token_id, 0);
}
