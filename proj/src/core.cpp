#include "asqp/core.hpp"

#include <algorithm>
#include <string>

namespace asqp {

namespace {

// Decodes one UTF-8 code point starting at `pos`; invalid bytes decode as
// themselves so offsets stay monotone on malformed input.
std::pair<char32_t, int> decode_utf8(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  int len = 1;
  char32_t cp = b0;
  if (b0 >= 0xF0 && b0 < 0xF8) {
    len = 4;
    cp = b0 & 0x07;
  } else if (b0 >= 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if (b0 >= 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  }
  if (len > 1) {
    if (pos + len > s.size()) return {b0, 1};
    for (int k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[pos + k]);
      if ((b & 0xC0) != 0x80) return {b0, 1};
      cp = (cp << 6) | (b & 0x3F);
    }
  }
  return {cp, len};
}

bool is_space(char32_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v' ||
         c == 0x00A0 || c == 0x3000;
}

bool is_ascii_punct(char32_t c) {
  return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
         (c >= 0x7B && c <= 0x7E);
}

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

}  // namespace

LanguageMode parse_language(std::string_view name) {
  if (name == "en") return LanguageMode::SpacePunct;
  if (name == "zh") return LanguageMode::PerCharacter;
  throw Error("unknown language '" + std::string(name) + "' (expected en or zh)");
}

std::string_view language_name(LanguageMode mode) {
  return mode == LanguageMode::SpacePunct ? "en" : "zh";
}

std::string_view sentiment_name(Sentiment s) {
  switch (s) {
    case Sentiment::POS: return "POS";
    case Sentiment::NEU: return "NEU";
    case Sentiment::NEG: return "NEG";
  }
  return "?";
}

Sentiment parse_sentiment(std::string_view name) {
  if (name == "POS") return Sentiment::POS;
  if (name == "NEU") return Sentiment::NEU;
  if (name == "NEG") return Sentiment::NEG;
  throw ParseError("unknown sentiment '" + std::string(name) + "'");
}

Implicitness implicitness(const Quadruple& q) {
  if (q.aspect && q.opinion) return Implicitness::EA_EO;
  if (q.aspect) return Implicitness::EA_IO;
  if (q.opinion) return Implicitness::IA_EO;
  return Implicitness::IA_IO;
}

std::string_view implicitness_name(Implicitness c) {
  switch (c) {
    case Implicitness::EA_EO: return "EA&EO";
    case Implicitness::EA_IO: return "EA&IO";
    case Implicitness::IA_EO: return "IA&EO";
    case Implicitness::IA_IO: return "IA&IO";
  }
  return "?";
}

void validate_quad(const Quadruple& q, int n, int n_categories) {
  if (!q.aspect && !q.opinion) throw BothImplicit("quadruple has neither aspect nor opinion");
  if (q.category < 0 || q.category >= n_categories) throw UnknownCategory("category id out of range");
  for (const OptSpan& s : {q.aspect, q.opinion}) {
    if (s && !(0 <= s->start && s->start <= s->end && s->end < n))
      throw MisalignedSpan("span [" + std::to_string(s->start) + "," + std::to_string(s->end) +
                           "] outside a sentence of " + std::to_string(n) + " tokens");
  }
}

// --- CategoryVocab ----------------------------------------------------------

CategoryVocab::CategoryVocab(std::vector<std::string> names) {
  for (auto& n : names) {
    if (index_.count(n)) throw Error("duplicate category '" + n + "'");
    intern(n);
  }
}

CategoryId CategoryVocab::intern(std::string_view name) {
  std::string key(name);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const CategoryId id = size();
  names_.push_back(key);
  index_.emplace(std::move(key), id);
  return id;
}

std::optional<CategoryId> CategoryVocab::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

CategoryId CategoryVocab::id(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw UnknownCategory("unknown category '" + std::string(name) + "'");
}

std::uint64_t CategoryVocab::hash() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& n : names_) {
    for (unsigned char c : n) h = (h ^ c) * kFnvPrime;
    h = (h ^ 0xFFu) * kFnvPrime;  // separator byte never appears in UTF-8
  }
  return h;
}

// --- TagSchema --------------------------------------------------------------

SchemaVariant parse_schema(std::string_view name) {
  if (name == "standard") return SchemaVariant::Standard;
  if (name == "variant1") return SchemaVariant::Variant1;
  if (name == "variant2") return SchemaVariant::Variant2;
  throw Error("unknown schema '" + std::string(name) + "'");
}

std::string_view schema_name(SchemaVariant v) {
  switch (v) {
    case SchemaVariant::Standard: return "standard";
    case SchemaVariant::Variant1: return "variant1";
    case SchemaVariant::Variant2: return "variant2";
  }
  return "?";
}

TagSchema::TagSchema(SchemaVariant variant, const CategoryVocab& vocab)
    : variant_(variant), n_categories_(vocab.size()) {
  names_ = {"AB-OB", "AE-OE"};
  switch (variant) {
    case SchemaVariant::Standard:
      for (int s = 0; s < kNumSentiments; ++s)
        names_.push_back("AB-OE-" + std::string(sentiment_name(Sentiment(s))));
      break;
    case SchemaVariant::Variant1:
      names_.push_back("AB-OE");
      break;
    case SchemaVariant::Variant2:
      for (int s = 0; s < kNumSentiments; ++s)
        for (int c = 0; c < vocab.size(); ++c)
          names_.push_back("AB-OE-" + std::string(sentiment_name(Sentiment(s))) + "-" +
                           vocab.name(c));
      break;
  }
}

std::optional<int> TagSchema::find_tag(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<int>(it - names_.begin());
}

int TagSchema::pair_tag(std::optional<Sentiment> s, std::optional<CategoryId> c) const {
  switch (variant_) {
    case SchemaVariant::Standard:
      if (!s) throw Error("standard schema needs a sentiment for AB-OE");
      return 2 + static_cast<int>(*s);
    case SchemaVariant::Variant1:
      return 2;
    case SchemaVariant::Variant2:
      if (!s || !c) throw Error("variant2 schema needs sentiment and category for AB-OE");
      if (*c < 0 || *c >= n_categories_) throw UnknownCategory("category id out of range");
      return 2 + static_cast<int>(*s) * n_categories_ + *c;
  }
  return -1;
}

std::optional<Sentiment> TagSchema::tag_sentiment(int tag) const {
  if (!is_pair_tag(tag)) return std::nullopt;
  switch (variant_) {
    case SchemaVariant::Standard: return Sentiment(tag - 2);
    case SchemaVariant::Variant1: return std::nullopt;
    case SchemaVariant::Variant2: return Sentiment((tag - 2) / n_categories_);
  }
  return std::nullopt;
}

std::optional<CategoryId> TagSchema::tag_category(int tag) const {
  if (variant_ != SchemaVariant::Variant2 || !is_pair_tag(tag)) return std::nullopt;
  return (tag - 2) % n_categories_;
}

// --- tokenizer --------------------------------------------------------------

Sentence tokenize(std::string_view raw_text, LanguageMode mode) {
  Sentence out;
  out.raw_text = std::string(raw_text);

  int cp_index = 0;
  int tok_char_start = -1;
  std::size_t tok_byte_start = 0;

  auto flush = [&](int char_end, std::size_t byte_end) {
    if (tok_char_start < 0) return;
    out.tokens.emplace_back(raw_text.substr(tok_byte_start, byte_end - tok_byte_start));
    out.char_offsets.emplace_back(tok_char_start, char_end);
    out.byte_offsets.emplace_back(static_cast<int>(tok_byte_start), static_cast<int>(byte_end));
    tok_char_start = -1;
  };

  std::size_t pos = 0;
  while (pos < raw_text.size()) {
    auto [cp, len] = decode_utf8(raw_text, pos);
    const std::size_t next = pos + len;
    if (is_space(cp)) {
      flush(cp_index, pos);
    } else if (mode == LanguageMode::PerCharacter || is_ascii_punct(cp)) {
      flush(cp_index, pos);
      tok_char_start = cp_index;
      tok_byte_start = pos;
      flush(cp_index + 1, next);
    } else if (tok_char_start < 0) {
      tok_char_start = cp_index;
      tok_byte_start = pos;
    }
    pos = next;
    ++cp_index;
  }
  flush(cp_index, pos);

  if (out.tokens.empty()) throw EmptyInput("input text has no tokens");
  return out;
}

Span char_span_to_token_span(const Sentence& sentence, int char_start, int char_end,
                             AlignmentMode mode, std::vector<std::string>* warnings) {
  const auto where = [&] {
    return "[" + std::to_string(char_start) + "," + std::to_string(char_end) + ")";
  };
  if (char_start < 0 || char_end <= char_start)
    throw MisalignedSpan("invalid character range " + where());

  int first = -1;
  int last = -1;
  bool snapped = false;
  for (int i = 0; i < sentence.size(); ++i) {
    const auto [s, e] = sentence.char_offsets[i];
    if (s < char_end && e > char_start) {
      if (first < 0) first = i;
      last = i;
    }
    if ((s < char_start && char_start < e) || (s < char_end && char_end < e)) snapped = true;
  }
  if (first < 0) throw MisalignedSpan("character range " + where() + " covers no token");
  if (snapped) {
    if (mode == AlignmentMode::Strict)
      throw MisalignedSpan("character range " + where() + " splits a token");
    if (warnings)
      warnings->push_back("snapped " + where() + " outward to tokens " + std::to_string(first) +
                          ".." + std::to_string(last));
  }
  return Span{first, last};
}

std::pair<int, int> token_span_to_char_span(const Sentence& sentence, Span span) {
  return {sentence.char_offsets.at(span.start).first, sentence.char_offsets.at(span.end).second};
}

std::string span_text(const Sentence& sentence, Span span) {
  const int b = sentence.byte_offsets.at(span.start).first;
  const int e = sentence.byte_offsets.at(span.end).second;
  return sentence.raw_text.substr(b, e - b);
}

}  // namespace asqp
