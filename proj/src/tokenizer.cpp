#include "tokprune/tokenizer.hpp"

#include <algorithm>
#include <fstream>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "tokprune/error.hpp"

namespace tokprune {

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  v.tokens_ = std::move(tokens);
  v.index_.reserve(v.tokens_.size());
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<TokenId>(i)).second) {
      fail(ErrorKind::kVocabError, "duplicate token '" + v.tokens_[i] + "' at line " + std::to_string(i + 1));
    }
  }
  auto special = [&v](const char* name) {
    auto id = v.find(name);
    if (!id) fail(ErrorKind::kVocabError, std::string("vocabulary lacks ") + name);
    return *id;
  };
  v.cls_ = special(kClsToken);
  v.sep_ = special(kSepToken);
  v.pad_ = special(kPadToken);
  v.unk_ = special(kUnkToken);
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kArtifactMissing, path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIoError, "cannot open " + path.string() + " for writing");
  for (const auto& t : tokens_) out << t << '\n';
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

bool is_whitespace(UChar32 c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || u_charType(c) == U_SPACE_SEPARATOR;
}

bool is_control(UChar32 c) {
  if (c == '\t' || c == '\n' || c == '\r') return false;
  switch (u_charType(c)) {
    case U_CONTROL_CHAR:
    case U_FORMAT_CHAR:
    case U_SURROGATE:
    case U_PRIVATE_USE_CHAR:
    case U_UNASSIGNED:
      return true;
    default:
      return false;
  }
}

bool is_punctuation(UChar32 c) {
  if ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126)) {
    return true;
  }
  return u_ispunct(c) != 0;
}

bool is_cjk(UChar32 c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) || (c >= 0x20000 && c <= 0x2A6DF) ||
         (c >= 0x2A700 && c <= 0x2B73F) || (c >= 0x2B740 && c <= 0x2B81F) || (c >= 0x2B820 && c <= 0x2CEAF) ||
         (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x2F800 && c <= 0x2FA1F);
}

const icu::Normalizer2& normalizer(bool decompose) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n =
      decompose ? icu::Normalizer2::getNFDInstance(status) : icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || n == nullptr) fail(ErrorKind::kConfigError, "ICU normalizer unavailable");
  return *n;
}

icu::UnicodeString normalize(const icu::UnicodeString& s, bool decompose) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString out = normalizer(decompose).normalize(s, status);
  if (U_FAILURE(status)) return s;
  return out;
}

// Lowercase, NFD, drop nonspacing marks.
std::string fold_word(const icu::UnicodeString& word) {
  icu::UnicodeString lowered(word);
  lowered.toLower(icu::Locale::getRoot());
  const icu::UnicodeString decomposed = normalize(lowered, true);
  icu::UnicodeString stripped;
  for (int32_t i = 0; i < decomposed.length();) {
    const UChar32 c = decomposed.char32At(i);
    if (u_charType(c) != U_NON_SPACING_MARK) stripped.append(c);
    i += U16_LENGTH(c);
  }
  std::string out;
  stripped.toUTF8String(out);
  return out;
}

}  // namespace

std::vector<std::string> basic_tokenize(std::string_view text) {
  const icu::UnicodeString input = normalize(
      icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size()))), false);

  // Whitespace-separated words after cleaning and CJK isolation.
  std::vector<icu::UnicodeString> words;
  icu::UnicodeString current;
  auto flush = [&] {
    if (!current.isEmpty()) {
      words.push_back(current);
      current.remove();
    }
  };
  for (int32_t i = 0; i < input.length();) {
    const UChar32 c = input.char32At(i);
    i += U16_LENGTH(c);
    if (c == 0 || c == 0xFFFD || is_control(c)) continue;
    if (is_whitespace(c)) {
      flush();
    } else if (is_cjk(c)) {
      flush();
      words.emplace_back(c);
    } else {
      current.append(c);
    }
  }
  flush();

  std::vector<std::string> out;
  for (const auto& word : words) {
    const std::string folded = fold_word(word);
    const icu::UnicodeString u = icu::UnicodeString::fromUTF8(folded);
    icu::UnicodeString piece;
    for (int32_t i = 0; i < u.length();) {
      const UChar32 c = u.char32At(i);
      i += U16_LENGTH(c);
      if (is_punctuation(c)) {
        if (!piece.isEmpty()) {
          std::string s;
          out.push_back(piece.toUTF8String(s));
          piece.remove();
        }
        std::string s;
        out.push_back(icu::UnicodeString(c).toUTF8String(s));
      } else {
        piece.append(c);
      }
    }
    if (!piece.isEmpty()) {
      std::string s;
      out.push_back(piece.toUTF8String(s));
    }
  }
  return out;
}

std::vector<std::string> wordpiece(std::string_view word, const Vocab& vocab) {
  // Byte offsets of code point starts, plus the end.
  std::vector<std::size_t> bounds;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if ((static_cast<unsigned char>(word[i]) & 0xC0) != 0x80) bounds.push_back(i);
  }
  bounds.push_back(word.size());
  const std::size_t chars = bounds.size() - 1;
  if (chars == 0) return {};
  if (chars > kMaxWordChars) return {kUnkToken};

  std::vector<std::string> pieces;
  std::size_t start = 0;
  std::string candidate;
  while (start < chars) {
    std::size_t end = chars;
    bool matched = false;
    while (end > start) {
      candidate.assign(start > 0 ? "##" : "");
      candidate.append(word.substr(bounds[start], bounds[end] - bounds[start]));
      if (vocab.find(candidate)) {
        matched = true;
        break;
      }
      --end;
    }
    if (!matched) return {kUnkToken};
    pieces.push_back(candidate);
    start = end;
  }
  return pieces;
}

std::vector<TokenId> tokenize_one(std::string_view text, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 2) fail(ErrorKind::kConfigError, "max_len must be at least 2");
  std::vector<TokenId> ids{vocab.cls_id()};
  const std::size_t budget = max_len - 1;
  for (const auto& word : basic_tokenize(text)) {
    for (const auto& piece : wordpiece(word, vocab)) {
      if (ids.size() == budget) break;
      ids.push_back(vocab.find(piece).value_or(vocab.unk_id()));
    }
    if (ids.size() == budget) break;
  }
  ids.push_back(vocab.sep_id());
  return ids;
}

TokenizedBatch tokenize(std::span<const std::string> texts, const Vocab& vocab, std::size_t max_len) {
  if (texts.empty()) fail(ErrorKind::kEmptyBatch, "no texts to tokenize");
  if (max_len < 2) fail(ErrorKind::kConfigError, "max_len must be at least 2");

  std::vector<std::vector<TokenId>> rows;
  rows.reserve(texts.size());
  std::size_t width = 0;
  for (const auto& t : texts) {
    rows.push_back(tokenize_one(t, vocab, max_len));
    width = std::max(width, rows.back().size());
  }

  TokenizedBatch batch;
  batch.batch_size = rows.size();
  batch.width = width;
  batch.ids.assign(batch.batch_size * width, vocab.pad_id());
  batch.pad_mask.assign(batch.batch_size * width, 0);
  batch.lengths.resize(batch.batch_size);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    batch.lengths[b] = rows[b].size();
    for (std::size_t i = 0; i < rows[b].size(); ++i) {
      batch.ids[b * width + i] = rows[b][i];
      batch.pad_mask[b * width + i] = 1;
    }
  }
  return batch;
}

}  // namespace tokprune
