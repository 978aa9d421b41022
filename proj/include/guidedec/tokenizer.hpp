#pragma once

// Tokenizers used by the engine and construction of guide phrases from
// their surface text.

#include <array>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "guidedec/core_types.hpp"
#include "guidedec/normalizer.hpp"

namespace guidedec {

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  virtual const Vocabulary& vocabulary() const = 0;

  /// Tokenizes text that starts a sequence.
  virtual TokenIds encode(std::string_view text) const = 0;

  virtual std::string decode(std::span<const TokenId> ids) const = 0;

  /// Separator a word gets when it continues existing text (" " for
  /// byte-level BPE, "" when the tokenizer joins tokens itself).
  virtual std::string_view continuation_prefix() const { return {}; }

  /// Tokenizes text that continues an existing sequence.
  TokenIds encode_continuation(std::string_view text) const {
    std::string s(continuation_prefix());
    s.append(text);
    return encode(s);
  }
};

// ============================================================================
// WordTokenizer
// ============================================================================

/// Whitespace tokenizer over a word vocabulary; decoding joins with spaces.
/// Used by the table-driven reference backends.
class WordTokenizer final : public Tokenizer {
 public:
  explicit WordTokenizer(Vocabulary vocab, std::optional<std::string> unk_token = std::nullopt)
      : vocab_(std::move(vocab)) {
    if (unk_token) {
      unk_ = vocab_.find(*unk_token);
      if (!unk_) throw Error("unknown-token '" + *unk_token + "' not in vocabulary");
    }
  }

  const Vocabulary& vocabulary() const override { return vocab_; }

  TokenIds encode(std::string_view text) const override {
    TokenIds ids;
    for (const auto& w : split_words(text)) {
      if (auto id = vocab_.find(w)) {
        ids.push_back(*id);
      } else if (unk_) {
        ids.push_back(*unk_);
      } else {
        throw Error("word '" + w + "' is not in the vocabulary");
      }
    }
    return ids;
  }

  std::string decode(std::span<const TokenId> ids) const override {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out.push_back(' ');
      out += vocab_.token(ids[i]);
    }
    return out;
  }

 private:
  Vocabulary vocab_;
  std::optional<TokenId> unk_;
};

// ============================================================================
// ByteLevelBpeTokenizer
// ============================================================================

namespace bbpe {

/// GPT-2 byte -> printable code point table.
inline const std::array<char32_t, 256>& byte_to_unicode() {
  static const std::array<char32_t, 256> table = [] {
    std::array<char32_t, 256> t{};
    std::array<bool, 256> direct{};
    for (int b = '!'; b <= '~'; ++b) direct[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
    char32_t next = 256;
    for (int b = 0; b < 256; ++b) t[b] = direct[b] ? static_cast<char32_t>(b) : next++;
    return t;
  }();
  return table;
}

inline const std::map<char32_t, unsigned char>& unicode_to_byte() {
  static const std::map<char32_t, unsigned char> table = [] {
    std::map<char32_t, unsigned char> m;
    const auto& fwd = byte_to_unicode();
    for (int b = 0; b < 256; ++b) m.emplace(fwd[b], static_cast<unsigned char>(b));
    return m;
  }();
  return table;
}

inline std::string encode_bytes(std::string_view raw) {
  std::string out;
  const auto& t = byte_to_unicode();
  for (unsigned char b : raw) utf8::append(out, t[b]);
  return out;
}

inline std::string decode_bytes(std::string_view mapped) {
  std::string out;
  const auto& t = unicode_to_byte();
  std::size_t pos = 0;
  while (pos < mapped.size()) {
    char32_t cp = utf8::decode_one(mapped, pos);
    auto it = t.find(cp);
    if (it == t.end()) {
      utf8::append(out, cp);
    } else {
      out.push_back(static_cast<char>(it->second));
    }
  }
  return out;
}

enum class CharClass { kLetter, kDigit, kSpace, kOther };

inline CharClass classify(char32_t c) {
  if (is_space(c)) return CharClass::kSpace;
  if (c >= U'0' && c <= U'9') return CharClass::kDigit;
  if ((c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z')) return CharClass::kLetter;
  if (c >= 0x80 && !is_punct(c)) return CharClass::kLetter;
  return CharClass::kOther;
}

/// GPT-2 style pre-tokenization: contractions, ` ?letters`, ` ?digits`,
/// ` ?other`, and whitespace runs whose last space binds to the next chunk.
inline std::vector<std::string> pretokenize(std::string_view text) {
  std::vector<std::pair<char32_t, std::size_t>> cps;  // code point, byte offset
  for (std::size_t pos = 0; pos < text.size();) {
    std::size_t start = pos;
    cps.emplace_back(utf8::decode_one(text, pos), start);
  }
  auto byte_at = [&](std::size_t i) { return i < cps.size() ? cps[i].second : text.size(); };

  std::vector<std::string> chunks;
  std::size_t i = 0;
  while (i < cps.size()) {
    const std::size_t begin = i;
    char32_t c = cps[i].first;

    if (c == U'\'' && i + 1 < cps.size()) {
      static constexpr std::array<std::string_view, 7> kSuffixes = {"s", "t", "re", "ve",
                                                                    "m", "ll", "d"};
      bool matched = false;
      for (auto suf : kSuffixes) {
        std::string_view rest = text.substr(byte_at(i + 1));
        if (rest.substr(0, suf.size()) == suf) {
          i += 1 + suf.size();
          matched = true;
          break;
        }
      }
      if (matched) {
        chunks.emplace_back(text.substr(byte_at(begin), byte_at(i) - byte_at(begin)));
        continue;
      }
    }

    if (classify(c) == CharClass::kSpace) {
      std::size_t j = i;
      while (j < cps.size() && classify(cps[j].first) == CharClass::kSpace) ++j;
      if (j == cps.size()) {
        chunks.emplace_back(text.substr(byte_at(i)));
        break;
      }
      // All but the last whitespace char form one chunk; a final ' ' binds
      // to the following chunk, any other final whitespace stands alone.
      if (j - 1 > i) chunks.emplace_back(text.substr(byte_at(i), byte_at(j - 1) - byte_at(i)));
      i = j - 1;
      if (cps[i].first != U' ') {
        chunks.emplace_back(text.substr(byte_at(i), byte_at(j) - byte_at(i)));
        i = j;
        continue;
      }
    }

    std::size_t j = i;
    if (cps[j].first == U' ') ++j;
    const CharClass cls = classify(cps[j].first);
    while (j < cps.size() && classify(cps[j].first) == cls) {
      ++j;
    }
    chunks.emplace_back(text.substr(byte_at(i), byte_at(j) - byte_at(i)));
    i = j;
  }
  return chunks;
}

}  // namespace bbpe

/// Byte-level BPE with a GPT-2 style byte mapping and ranked merges.
class ByteLevelBpeTokenizer final : public Tokenizer {
 public:
  /// `merges` holds "left right" pairs in priority order (HF merges.txt lines).
  ByteLevelBpeTokenizer(Vocabulary vocab, const std::vector<std::string>& merges)
      : vocab_(std::move(vocab)) {
    for (std::size_t r = 0; r < merges.size(); ++r) {
      const auto& line = merges[r];
      if (line.empty() || line[0] == '#') continue;
      auto sp = line.find(' ');
      if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size()) {
        throw Error("malformed merge rule '" + line + "'");
      }
      ranks_.emplace(std::make_pair(line.substr(0, sp), line.substr(sp + 1)), r);
    }
  }

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::string_view continuation_prefix() const override { return " "; }

  TokenIds encode(std::string_view text) const override {
    TokenIds ids;
    for (const auto& chunk : bbpe::pretokenize(text)) {
      for (const auto& piece : bpe(bbpe::encode_bytes(chunk))) {
        auto id = vocab_.find(piece);
        if (!id) throw Error("byte-level piece '" + piece + "' is not in the vocabulary");
        ids.push_back(*id);
      }
    }
    return ids;
  }

  std::string decode(std::span<const TokenId> ids) const override {
    std::string mapped;
    for (TokenId id : ids) mapped += vocab_.token(id);
    return bbpe::decode_bytes(mapped);
  }

 private:
  std::vector<std::string> bpe(const std::string& mapped) const {
    std::vector<std::string> parts;
    for (std::size_t pos = 0; pos < mapped.size();) {
      std::size_t start = pos;
      utf8::decode_one(mapped, pos);
      parts.emplace_back(mapped.substr(start, pos - start));
    }
    while (parts.size() > 1) {
      std::size_t best_rank = std::numeric_limits<std::size_t>::max();
      std::size_t best_at = 0;
      for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        auto it = ranks_.find({parts[i], parts[i + 1]});
        if (it != ranks_.end() && it->second < best_rank) {
          best_rank = it->second;
          best_at = i;
        }
      }
      if (best_rank == std::numeric_limits<std::size_t>::max()) break;
      // Merge every occurrence of the winning pair, left to right.
      const std::string left = parts[best_at], right = parts[best_at + 1];
      std::vector<std::string> merged;
      merged.reserve(parts.size());
      for (std::size_t i = 0; i < parts.size();) {
        if (i + 1 < parts.size() && parts[i] == left && parts[i + 1] == right) {
          merged.push_back(left + right);
          i += 2;
        } else {
          merged.push_back(parts[i]);
          ++i;
        }
      }
      parts = std::move(merged);
    }
    return parts;
  }

  Vocabulary vocab_;
  std::map<std::pair<std::string, std::string>, std::size_t> ranks_;
};

// ============================================================================
// Guide phrase construction
// ============================================================================

/// Builds a guide phrase from its surface text. The AR ids encode the phrase
/// as a continuation of existing text; `mlm_tokenizer` (if given) supplies
/// the right context handed to the masked model, otherwise the AR ids are
/// reused.
inline GuidePhrase make_guide_phrase(std::string_view surface, const Tokenizer& ar_tokenizer,
                                     const WordNormalizer& normalizer,
                                     const Tokenizer* mlm_tokenizer = nullptr) {
  GuidePhrase p;
  p.words = split_words(surface);
  if (p.words.empty()) throw Error("empty guide phrase");
  for (std::size_t i = 0; i < p.words.size(); ++i) {
    if (i) p.surface.push_back(' ');
    p.surface += p.words[i];
  }
  p.token_ids = ar_tokenizer.encode_continuation(p.surface);
  if (p.token_ids.empty()) throw Error("guide phrase '" + p.surface + "' has no tokens");
  p.first_token_id = p.token_ids.front();

  const std::string expected = std::string(ar_tokenizer.continuation_prefix()) + p.surface;
  if (ar_tokenizer.decode(p.token_ids) != expected) {
    throw Error("guide phrase '" + p.surface + "' does not round-trip through the tokenizer");
  }

  p.normalized_first_word = normalize_word(strip_punct(p.words.front()).empty()
                                               ? p.words.front()
                                               : strip_punct(p.words.front()),
                                           normalizer);
  if (p.words.size() > 1) {
    std::string tail;
    for (std::size_t i = 1; i < p.words.size(); ++i) {
      if (i > 1) tail.push_back(' ');
      tail += p.words[i];
    }
    p.tail_token_ids = ar_tokenizer.encode_continuation(tail);
  }
  p.mlm_token_ids = mlm_tokenizer ? mlm_tokenizer->encode_continuation(p.surface) : p.token_ids;
  return p;
}

inline Storyline make_storyline(const std::vector<std::string>& surfaces,
                                const Tokenizer& ar_tokenizer, const WordNormalizer& normalizer,
                                const Tokenizer* mlm_tokenizer = nullptr) {
  Storyline s;
  s.phrases.reserve(surfaces.size());
  for (const auto& surface : surfaces) {
    s.phrases.push_back(make_guide_phrase(surface, ar_tokenizer, normalizer, mlm_tokenizer));
  }
  return s;
}

}  // namespace guidedec
