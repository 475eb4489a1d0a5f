// Horns tagging codec.
//
// A sentence of n tokens is laid out on an (n+1)x(n+1) grid whose index 0 on
// both axes is the [NULL] sentinel; token k lives at index k+1. Rows index
// aspect tokens, columns index opinion tokens. Each quadruple (c, a, o, s)
// marks three corner cells:
//
//   AB-OB       at (a.start, o.start)
//   AE-OE       at (a.end,   o.end)
//   AB-OE-<s>   at (a.start, o.end)
//
// An implicit aspect uses row 0 (AB-OB and AB-OE-<s> only), an implicit
// opinion uses column 0 (AB-OE-<s> and AE-OE only). Categories are carried by
// a per-token grid over the quad's anchor span: the aspect when explicit,
// otherwise the opinion.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "asqp/core.hpp"
#include "asqp/data.hpp"

namespace asqp {

class TagMatrix {
 public:
  TagMatrix() = default;
  // `n_tokens` excludes the sentinel; the matrix has n_tokens + 1 rows.
  TagMatrix(int n_tokens, int n_tags);

  int size() const { return size_; }
  int n_tokens() const { return size_ - 1; }
  int n_tags() const { return n_tags_; }

  bool has(int row, int col, int tag) const { return bits_[index(row, col, tag)] != 0; }
  // Throws std::out_of_range for cell (0,0), which must stay empty.
  void set(int row, int col, int tag, bool on = true);
  std::vector<int> tags(int row, int col) const;
  bool cell_empty(int row, int col) const;
  bool empty() const;

  friend bool operator==(const TagMatrix&, const TagMatrix&) = default;

 private:
  std::size_t index(int row, int col, int tag) const {
    return (static_cast<std::size_t>(row) * size_ + col) * n_tags_ + tag;
  }

  int size_ = 1;
  int n_tags_ = 0;
  std::vector<std::uint8_t> bits_;
};

// (n+1) x |C| per-token assignment; 0/1 for gold, probabilities for predictions.
using CategoryGrid = Eigen::MatrixXd;

struct AosTriplet {
  OptSpan aspect;
  OptSpan opinion;
  std::optional<Sentiment> sentiment;  // empty under Variant1
  std::optional<CategoryId> category;  // set only under Variant2

  friend auto operator<=>(const AosTriplet&, const AosTriplet&) = default;
};

struct SampleEncoding {
  SchemaVariant variant = SchemaVariant::Standard;
  TagMatrix tag_matrix;
  CategoryGrid category_grid;   // (n+1) x |C|; all zero under Variant2
  Eigen::MatrixXd sentiment_grid;  // (n+1) x 3 under Variant1, else (n+1) x 0
};

struct DecodeDiagnostics {
  int dangling_begin = 0;      // AB-OB cells no triplet used
  int dangling_end = 0;        // AE-OE cells no triplet used
  int unanchored_pairs = 0;    // AB-OE cells missing an anchor
  int unmatched_triplets = 0;  // triplets with no matching category/sentiment span

  friend bool operator==(const DecodeDiagnostics&, const DecodeDiagnostics&) = default;
};

// Span the category (and, under Variant1, the sentiment) is attached to.
inline OptSpan anchor_span(const OptSpan& aspect, const OptSpan& opinion) {
  return aspect ? aspect : opinion;
}

SampleEncoding encode_sample(const Sample& sample, const TagSchema& schema,
                             const CategoryVocab& vocab);

std::vector<AosTriplet> decode_triplets(const TagMatrix& matrix, const TagSchema& schema,
                                        DecodeDiagnostics* diagnostics = nullptr);

inline constexpr int kOracleMaxTokens = 12;

// Exhaustive reference decoder: enumerates every (aspect, opinion, tag)
// candidate and keeps those whose corner tags are present and which the
// nearest-match rule would select. Throws InstanceTooLarge above 12 tokens.
std::vector<AosTriplet> decode_triplets_oracle(const TagMatrix& matrix, const TagSchema& schema);

struct SpanLabel {
  int label = 0;  // category id, or sentiment index for sentiment grids
  OptSpan span;   // nullopt for a positive on the sentinel row
  double score = 0.0;  // mean grid value over the run

  friend bool operator==(const SpanLabel&, const SpanLabel&) = default;
};

// Maximal runs of entries strictly above `threshold`, per column.
std::vector<SpanLabel> decode_categories(const Eigen::MatrixXd& grid, double threshold = 0.5);

enum class AttachPolicy { AllMatching, BestOne };
std::string_view policy_name(AttachPolicy p);  // "all_matching" / "best_one"
AttachPolicy parse_policy(std::string_view name);

// Joins triplets with category spans on the anchor span. Triplets without a
// sentiment (Variant1) are joined with `sentiment_spans` the same way.
QuadList assemble_quads(const std::vector<AosTriplet>& triplets,
                        const std::vector<SpanLabel>& category_spans,
                        AttachPolicy policy = AttachPolicy::AllMatching,
                        DecodeDiagnostics* diagnostics = nullptr,
                        const std::vector<SpanLabel>* sentiment_spans = nullptr);

// decode_triplets + decode_categories + assemble_quads for one encoding.
QuadList decode_encoding(const SampleEncoding& encoding, const TagSchema& schema,
                         double grid_threshold = 0.5,
                         AttachPolicy policy = AttachPolicy::AllMatching,
                         DecodeDiagnostics* diagnostics = nullptr);

// Compact debug form: {"n", "cells": [[row, col, [tag names]]...],
// "category_runs": [{"category", "span"}], "sentiment_runs": [...]}.
// Cell coordinates include the sentinel; run spans are token indices.
nlohmann::json encoding_to_json(const SampleEncoding& encoding, const TagSchema& schema,
                                const CategoryVocab& vocab);
SampleEncoding encoding_from_json(const nlohmann::json& j, const TagSchema& schema,
                                  const CategoryVocab& vocab);

}  // namespace asqp
