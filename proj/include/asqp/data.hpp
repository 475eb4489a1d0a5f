// Corpus ingestion (JSONL and the legacy `####` line format), deterministic
// splitting and corpus statistics.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "asqp/core.hpp"

namespace asqp {

struct Sample {
  std::string id;  // "id" field of the record, else its zero-based record index
  Sentence sentence;
  QuadList gold;
};

struct Corpus {
  std::vector<Sample> samples;
  CategoryVocab vocab;
  LanguageMode language = LanguageMode::SpacePunct;

  int size() const { return static_cast<int>(samples.size()); }
};

struct LoadOptions {
  LanguageMode language = LanguageMode::SpacePunct;
  AlignmentMode alignment = AlignmentMode::Strict;
  // Categories pre-registered before reading, in order. Used to load
  // predictions against the gold vocabulary.
  std::optional<CategoryVocab> vocab_seed;
  // Lenient-mode alignment messages, prefixed with the line number.
  std::vector<std::string>* warnings = nullptr;
  // Keep quads whose aspect and opinion are both NULL. Only statistics can
  // consume them; the codec rejects them.
  bool allow_both_implicit = false;
};

// JSONL: one record per line,
//   {"text": str, "quads": [{"category": str, "aspect": [s, e] | null,
//                            "opinion": [s, e] | null, "sentiment": "POS"|"NEU"|"NEG"}]}
// with optional "id". A first line of the form {"categories": [...]} declares
// the vocabulary up front. Offsets are code points, half-open.
Corpus load_jsonl(const std::filesystem::path& path, const LoadOptions& options = {});
Corpus parse_jsonl(std::istream& in, const LoadOptions& options = {},
                   const std::string& source = "<stream>");

// Legacy: `text####[['s,e', 'Category', 'code', 's,e'], ...]` with sentiment
// codes 0=NEG 1=NEU 2=POS and "-1,-1" for NULL.
Corpus load_legacy(const std::filesystem::path& path, const LoadOptions& options = {});
Corpus parse_legacy(std::istream& in, const LoadOptions& options = {},
                    const std::string& source = "<stream>");

nlohmann::json sample_to_json(const Sample& sample, const CategoryVocab& vocab,
                              const QuadList& quads);
void write_jsonl(std::ostream& out, const Corpus& corpus, bool with_header = false);
void write_legacy(std::ostream& out, const Corpus& corpus);

// Floor-partitioned sizes for dev/test, remainder to train.
std::array<int, 3> split_sizes(int n, const std::array<double, 3>& ratios);
std::tuple<Corpus, Corpus, Corpus> split(const Corpus& corpus, const std::array<double, 3>& ratios,
                                         std::uint64_t seed);

struct StatsReport {
  int n_samples = 0;
  double words_per_sample = 0.0;
  int n_categories = 0;
  int n_quads = 0;
  double quads_per_sample = 0.0;
  std::array<int, kNumImplicitness> implicitness{};  // indexed by Implicitness
  std::array<int, kNumSentiments> sentiments{};      // indexed by Sentiment
  double words_per_aspect = 0.0;                     // over explicit aspects
  double words_per_opinion = 0.0;                    // over explicit opinions
  std::map<int, double> density;                     // quads per sample -> ratio of samples

  friend bool operator==(const StatsReport&, const StatsReport&) = default;
};

StatsReport compute_stats(const Corpus& corpus);
nlohmann::json stats_to_json(const StatsReport& report);
StatsReport stats_from_json(const nlohmann::json& j);
std::string format_stats_table(const StatsReport& report);

}  // namespace asqp
