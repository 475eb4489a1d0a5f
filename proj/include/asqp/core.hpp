// Domain types shared by every module: sentences, spans, sentiments,
// quadruples, the category vocabulary, tag schemas and the tokenizer.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace asqp {

// ---------------------------------------------------------------------------
// Errors. Every failure the library reports on purpose derives from Error;
// the CLI maps Error to exit code 1 and anything else to exit code 2.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ASQP_DEFINE_ERROR(Name, Base)   \
  class Name : public Base {            \
   public:                              \
    using Base::Base;                   \
  };

ASQP_DEFINE_ERROR(EmptyInput, Error)
ASQP_DEFINE_ERROR(MisalignedSpan, Error)
ASQP_DEFINE_ERROR(ParseError, Error)
ASQP_DEFINE_ERROR(DuplicateQuad, ParseError)
ASQP_DEFINE_ERROR(BothImplicit, Error)
ASQP_DEFINE_ERROR(UnknownSentimentCode, ParseError)
ASQP_DEFINE_ERROR(UnknownCategory, Error)
ASQP_DEFINE_ERROR(ConflictingEncoding, Error)
ASQP_DEFINE_ERROR(InstanceTooLarge, Error)
ASQP_DEFINE_ERROR(ShapeMismatch, Error)
ASQP_DEFINE_ERROR(NonFiniteLoss, Error)
ASQP_DEFINE_ERROR(NonFiniteGradient, Error)
ASQP_DEFINE_ERROR(DivergedLoss, Error)
ASQP_DEFINE_ERROR(VocabMismatch, Error)
ASQP_DEFINE_ERROR(FormatError, Error)

#undef ASQP_DEFINE_ERROR

// ---------------------------------------------------------------------------

enum class LanguageMode { SpacePunct, PerCharacter };
enum class AlignmentMode { Strict, Lenient };

LanguageMode parse_language(std::string_view name);  // "en" | "zh"
std::string_view language_name(LanguageMode mode);

struct Sentence {
  std::string raw_text;                        // UTF-8
  std::vector<std::string> tokens;
  std::vector<std::pair<int, int>> char_offsets;  // code points, half-open
  std::vector<std::pair<int, int>> byte_offsets;  // bytes into raw_text

  int size() const { return static_cast<int>(tokens.size()); }
};

// Inclusive token range; indices exclude the [NULL] sentinel.
struct Span {
  int start = 0;
  int end = 0;

  int length() const { return end - start + 1; }
  friend auto operator<=>(const Span&, const Span&) = default;
};

using OptSpan = std::optional<Span>;

enum class Sentiment : std::uint8_t { POS = 0, NEU = 1, NEG = 2 };
inline constexpr int kNumSentiments = 3;

std::string_view sentiment_name(Sentiment s);
Sentiment parse_sentiment(std::string_view name);

using CategoryId = int;

struct Quadruple {
  CategoryId category = 0;
  OptSpan aspect;
  OptSpan opinion;
  Sentiment sentiment = Sentiment::POS;

  friend auto operator<=>(const Quadruple&, const Quadruple&) = default;
};

using QuadList = std::vector<Quadruple>;

enum class Implicitness { EA_EO = 0, EA_IO = 1, IA_EO = 2, IA_IO = 3 };
inline constexpr int kNumImplicitness = 4;

Implicitness implicitness(const Quadruple& q);
std::string_view implicitness_name(Implicitness c);

// Throws BothImplicit / MisalignedSpan when the quad cannot live in a
// sentence of `n` tokens.
void validate_quad(const Quadruple& q, int n, int n_categories);

class CategoryVocab {
 public:
  CategoryVocab() = default;
  explicit CategoryVocab(std::vector<std::string> names);

  // Returns the existing id or appends a new one.
  CategoryId intern(std::string_view name);
  std::optional<CategoryId> find(std::string_view name) const;
  CategoryId id(std::string_view name) const;  // throws UnknownCategory
  const std::string& name(CategoryId id) const { return names_.at(id); }
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

  // FNV-1a over the ordered names; checkpoints refuse to load on mismatch.
  std::uint64_t hash() const;

  friend bool operator==(const CategoryVocab& a, const CategoryVocab& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, CategoryId> index_;
};

// ---------------------------------------------------------------------------
// Tag schemas for the aspect-opinion matrix.
//
//   Standard : AB-OB, AE-OE, AB-OE-POS, AB-OE-NEU, AB-OE-NEG
//   Variant1 : AB-OB, AE-OE, AB-OE            (sentiment classified per token)
//   Variant2 : AB-OB, AE-OE, AB-OE-<s>-<c>    (category carried by the tag)
//
// The absent tag "-" is an empty cell and has no index.

enum class SchemaVariant : std::uint8_t { Standard = 0, Variant1 = 1, Variant2 = 2 };

SchemaVariant parse_schema(std::string_view name);
std::string_view schema_name(SchemaVariant v);

inline constexpr int kTagBegin = 0;  // AB-OB
inline constexpr int kTagEnd = 1;    // AE-OE

class TagSchema {
 public:
  TagSchema() : TagSchema(SchemaVariant::Standard) {}
  // Variant2 names its tags after the vocabulary; the other variants ignore it.
  explicit TagSchema(SchemaVariant variant, const CategoryVocab& vocab = {});
  static TagSchema standard() { return TagSchema(SchemaVariant::Standard); }
  static TagSchema variant1() { return TagSchema(SchemaVariant::Variant1); }
  static TagSchema variant2(const CategoryVocab& vocab) {
    return TagSchema(SchemaVariant::Variant2, vocab);
  }

  SchemaVariant variant() const { return variant_; }
  int size() const { return static_cast<int>(names_.size()); }
  const std::string& tag_name(int tag) const { return names_.at(tag); }
  std::optional<int> find_tag(std::string_view name) const;
  const std::vector<std::string>& tag_names() const { return names_; }
  int n_categories() const { return n_categories_; }

  // AB-OE family (everything except AB-OB and AE-OE).
  bool is_pair_tag(int tag) const { return tag >= 2; }
  int pair_tag(std::optional<Sentiment> s, std::optional<CategoryId> c) const;
  std::optional<Sentiment> tag_sentiment(int tag) const;
  std::optional<CategoryId> tag_category(int tag) const;

 private:
  SchemaVariant variant_;
  int n_categories_;
  std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------

Sentence tokenize(std::string_view raw_text, LanguageMode mode);

// Minimal token span covering the code-point range [char_start, char_end).
// Strict mode throws MisalignedSpan when either boundary falls strictly inside
// a token; lenient mode snaps outward and appends a message to `warnings`.
Span char_span_to_token_span(const Sentence& sentence, int char_start, int char_end,
                             AlignmentMode mode = AlignmentMode::Strict,
                             std::vector<std::string>* warnings = nullptr);

// Code-point range [start, end) covered by a token span.
std::pair<int, int> token_span_to_char_span(const Sentence& sentence, Span span);

std::string span_text(const Sentence& sentence, Span span);

}  // namespace asqp
