#include "asqp/codec.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <stdexcept>
#include <tuple>

namespace asqp {

namespace {

using nlohmann::json;

// Matrix index of a token.
int cell(int token) { return token + 1; }

void mark_span(Eigen::MatrixXd& grid, Span span, int column) {
  for (int t = span.start; t <= span.end; ++t) grid(cell(t), column) = 1.0;
}

std::string describe(const QuadList& quads, const CategoryVocab& vocab) {
  std::string out;
  auto span = [](const OptSpan& s) {
    return s ? "[" + std::to_string(s->start) + "," + std::to_string(s->end) + "]"
             : std::string("NULL");
  };
  for (const auto& q : quads) {
    if (!out.empty()) out += " ";
    out += "(" + vocab.name(q.category) + " " + span(q.aspect) + " " + span(q.opinion) + " " +
           std::string(sentiment_name(q.sentiment)) + ")";
  }
  return out.empty() ? "none" : out;
}

// Labels attached to `anchor` under the policy, in id order.
std::vector<int> attach(const std::vector<SpanLabel>& spans, const OptSpan& anchor,
                        AttachPolicy policy) {
  std::vector<int> out;
  const SpanLabel* best = nullptr;
  for (const auto& s : spans) {
    if (s.span != anchor) continue;
    if (policy == AttachPolicy::AllMatching) {
      out.push_back(s.label);
    } else if (!best || s.score > best->score || (s.score == best->score && s.label < best->label)) {
      best = &s;
    }
  }
  if (best) out.push_back(best->label);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

// --- TagMatrix --------------------------------------------------------------

TagMatrix::TagMatrix(int n_tokens, int n_tags)
    : size_(n_tokens + 1), n_tags_(n_tags),
      bits_(static_cast<std::size_t>(size_) * size_ * n_tags, 0) {
  if (n_tokens < 0 || n_tags < 0) throw std::invalid_argument("negative TagMatrix dimension");
}

void TagMatrix::set(int row, int col, int tag, bool on) {
  if (row < 0 || col < 0 || row >= size_ || col >= size_ || tag < 0 || tag >= n_tags_)
    throw std::out_of_range("TagMatrix index out of range");
  if (row == 0 && col == 0) throw std::out_of_range("cell (0,0) of a TagMatrix is always empty");
  bits_[index(row, col, tag)] = on ? 1 : 0;
}

std::vector<int> TagMatrix::tags(int row, int col) const {
  std::vector<int> out;
  for (int t = 0; t < n_tags_; ++t)
    if (has(row, col, t)) out.push_back(t);
  return out;
}

bool TagMatrix::cell_empty(int row, int col) const {
  for (int t = 0; t < n_tags_; ++t)
    if (has(row, col, t)) return false;
  return true;
}

bool TagMatrix::empty() const {
  return std::none_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; });
}

// --- encode -----------------------------------------------------------------

SampleEncoding encode_sample(const Sample& sample, const TagSchema& schema,
                             const CategoryVocab& vocab) {
  const int n = sample.sentence.size();
  const bool variant1 = schema.variant() == SchemaVariant::Variant1;
  const bool variant2 = schema.variant() == SchemaVariant::Variant2;
  if (variant2 && schema.n_categories() != vocab.size())
    throw ShapeMismatch("variant2 schema was built for a different vocabulary");

  SampleEncoding enc;
  enc.variant = schema.variant();
  enc.tag_matrix = TagMatrix(n, schema.size());
  enc.category_grid = CategoryGrid::Zero(n + 1, vocab.size());
  enc.sentiment_grid = Eigen::MatrixXd::Zero(n + 1, variant1 ? kNumSentiments : 0);

  for (const auto& q : sample.gold) {
    validate_quad(q, n, vocab.size());
    const int pair = schema.pair_tag(q.sentiment, q.category);
    auto& m = enc.tag_matrix;
    if (q.aspect && q.opinion) {
      m.set(cell(q.aspect->start), cell(q.opinion->start), kTagBegin);
      m.set(cell(q.aspect->end), cell(q.opinion->end), kTagEnd);
      m.set(cell(q.aspect->start), cell(q.opinion->end), pair);
    } else if (q.opinion) {
      m.set(0, cell(q.opinion->start), kTagBegin);
      m.set(0, cell(q.opinion->end), pair);
    } else {
      m.set(cell(q.aspect->start), 0, pair);
      m.set(cell(q.aspect->end), 0, kTagEnd);
    }
    const Span anchor = *anchor_span(q.aspect, q.opinion);
    if (!variant2) mark_span(enc.category_grid, anchor, q.category);
    if (variant1) mark_span(enc.sentiment_grid, anchor, static_cast<int>(q.sentiment));
  }

  // Cells are shared between quads, so some gold sets cannot be told apart
  // after encoding. Decoding is the ground truth for what survived.
  QuadList decoded = decode_encoding(enc, schema);
  QuadList gold = sample.gold;
  std::sort(decoded.begin(), decoded.end());
  std::sort(gold.begin(), gold.end());
  if (decoded != gold)
    throw ConflictingEncoding("quads of sample '" + sample.id +
                              "' cannot be encoded losslessly: gold " + describe(gold, vocab) +
                              " decodes as " + describe(decoded, vocab));
  return enc;
}

// --- triplet decoding -------------------------------------------------------

std::vector<AosTriplet> decode_triplets(const TagMatrix& m, const TagSchema& schema,
                                        DecodeDiagnostics* diagnostics) {
  if (m.n_tags() != schema.size()) throw ShapeMismatch("tag matrix does not match the schema");
  const int size = m.size();
  std::vector<AosTriplet> out;
  std::set<std::pair<int, int>> used_begin;
  std::set<std::pair<int, int>> used_end;
  int unanchored = 0;

  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      if (i == 0 && j == 0) continue;
      for (int t = 2; t < schema.size(); ++t) {
        if (!m.has(i, j, t)) continue;

        // Column scan: nearest AE-OE at or below row i.
        int aspect_end = -1;
        if (i > 0) {
          for (int r = i; r < size; ++r)
            if (m.has(r, j, kTagEnd)) {
              aspect_end = r;
              break;
            }
        }
        // Row scan: nearest AB-OB at or left of column j, never the sentinel column.
        int opinion_begin = -1;
        if (j > 0) {
          for (int c = j; c >= 1; --c)
            if (m.has(i, c, kTagBegin)) {
              opinion_begin = c;
              break;
            }
        }

        AosTriplet tri;
        tri.sentiment = schema.tag_sentiment(t);
        tri.category = schema.tag_category(t);
        if (i > 0 && j > 0) {
          if (aspect_end < 0 || opinion_begin < 0) {
            ++unanchored;
            continue;
          }
          tri.aspect = Span{i - 1, aspect_end - 1};
          tri.opinion = Span{opinion_begin - 1, j - 1};
          used_end.emplace(aspect_end, j);
          used_begin.emplace(i, opinion_begin);
        } else if (i == 0) {
          if (opinion_begin < 0) {
            ++unanchored;
            continue;
          }
          tri.opinion = Span{opinion_begin - 1, j - 1};
          used_begin.emplace(0, opinion_begin);
        } else {
          if (aspect_end < 0) {
            ++unanchored;
            continue;
          }
          tri.aspect = Span{i - 1, aspect_end - 1};
          used_end.emplace(aspect_end, 0);
        }
        out.push_back(tri);
      }
    }
  }

  if (diagnostics) {
    int n_begin = 0;
    int n_end = 0;
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) {
        n_begin += m.has(i, j, kTagBegin);
        n_end += m.has(i, j, kTagEnd);
      }
    diagnostics->dangling_begin += n_begin - static_cast<int>(used_begin.size());
    diagnostics->dangling_end += n_end - static_cast<int>(used_end.size());
    diagnostics->unanchored_pairs += unanchored;
  }
  return out;
}

std::vector<AosTriplet> decode_triplets_oracle(const TagMatrix& m, const TagSchema& schema) {
  if (m.n_tokens() > kOracleMaxTokens)
    throw InstanceTooLarge("oracle decoder is limited to " + std::to_string(kOracleMaxTokens) +
                           " tokens");
  if (m.n_tags() != schema.size()) throw ShapeMismatch("tag matrix does not match the schema");
  const int n = m.n_tokens();

  std::vector<OptSpan> spans{std::nullopt};
  for (int s = 0; s < n; ++s)
    for (int e = s; e < n; ++e) spans.push_back(Span{s, e});

  // Does any cell strictly between the anchor and the candidate corner carry `tag`?
  auto any_in_column = [&](int col, int row_lo, int row_hi, int tag) {
    for (int r = row_lo; r < row_hi; ++r)
      if (m.has(r, col, tag)) return true;
    return false;
  };
  auto any_in_row = [&](int row, int col_lo, int col_hi, int tag) {
    for (int c = col_lo + 1; c <= col_hi; ++c)
      if (m.has(row, c, tag)) return true;
    return false;
  };

  struct Keyed {
    int row, col, tag;
    AosTriplet tri;
  };
  std::vector<Keyed> found;
  for (const auto& a : spans) {
    for (const auto& o : spans) {
      if (!a && !o) continue;
      for (int t = 2; t < schema.size(); ++t) {
        bool ok = false;
        int row = 0;
        int col = 0;
        if (a && o) {
          const int as = cell(a->start), ae = cell(a->end), os = cell(o->start), oe = cell(o->end);
          row = as;
          col = oe;
          ok = m.has(as, os, kTagBegin) && m.has(ae, oe, kTagEnd) && m.has(as, oe, t) &&
               !any_in_column(oe, as, ae, kTagEnd) && !any_in_row(as, os, oe, kTagBegin);
        } else if (o) {
          const int os = cell(o->start), oe = cell(o->end);
          col = oe;
          ok = m.has(0, os, kTagBegin) && m.has(0, oe, t) && !any_in_row(0, os, oe, kTagBegin);
        } else {
          const int as = cell(a->start), ae = cell(a->end);
          row = as;
          ok = m.has(as, 0, t) && m.has(ae, 0, kTagEnd) && !any_in_column(0, as, ae, kTagEnd);
        }
        if (ok)
          found.push_back({row, col, t,
                           AosTriplet{a, o, schema.tag_sentiment(t), schema.tag_category(t)}});
      }
    }
  }
  std::sort(found.begin(), found.end(), [](const Keyed& x, const Keyed& y) {
    return std::tie(x.row, x.col, x.tag) < std::tie(y.row, y.col, y.tag);
  });
  std::vector<AosTriplet> out;
  out.reserve(found.size());
  for (auto& k : found) out.push_back(k.tri);
  return out;
}

// --- categories and assembly ------------------------------------------------

std::vector<SpanLabel> decode_categories(const Eigen::MatrixXd& grid, double threshold) {
  std::vector<SpanLabel> out;
  const int rows = static_cast<int>(grid.rows());
  for (int c = 0; c < grid.cols(); ++c) {
    if (rows > 0 && grid(0, c) > threshold) out.push_back({c, std::nullopt, grid(0, c)});
    int r = 1;
    while (r < rows) {
      if (!(grid(r, c) > threshold)) {
        ++r;
        continue;
      }
      const int begin = r;
      double sum = 0.0;
      while (r < rows && grid(r, c) > threshold) sum += grid(r++, c);
      out.push_back({c, Span{begin - 1, r - 2}, sum / (r - begin)});
    }
  }
  return out;
}

QuadList assemble_quads(const std::vector<AosTriplet>& triplets,
                        const std::vector<SpanLabel>& category_spans, AttachPolicy policy,
                        DecodeDiagnostics* diagnostics,
                        const std::vector<SpanLabel>* sentiment_spans) {
  QuadList out;
  for (const auto& tri : triplets) {
    const OptSpan anchor = anchor_span(tri.aspect, tri.opinion);
    std::vector<int> categories =
        tri.category ? std::vector<int>{*tri.category} : attach(category_spans, anchor, policy);
    std::vector<int> sentiments;
    if (tri.sentiment)
      sentiments.push_back(static_cast<int>(*tri.sentiment));
    else if (sentiment_spans)
      sentiments = attach(*sentiment_spans, anchor, policy);

    if (!anchor || categories.empty() || sentiments.empty()) {
      if (diagnostics) ++diagnostics->unmatched_triplets;
      continue;
    }
    for (int c : categories)
      for (int s : sentiments) {
        Quadruple q{c, tri.aspect, tri.opinion, Sentiment(s)};
        if (std::find(out.begin(), out.end(), q) == out.end()) out.push_back(q);
      }
  }
  return out;
}

QuadList decode_encoding(const SampleEncoding& enc, const TagSchema& schema, double grid_threshold,
                         AttachPolicy policy, DecodeDiagnostics* diagnostics) {
  const auto triplets = decode_triplets(enc.tag_matrix, schema, diagnostics);
  const auto categories = decode_categories(enc.category_grid, grid_threshold);
  if (schema.variant() == SchemaVariant::Variant1) {
    const auto sentiments = decode_categories(enc.sentiment_grid, grid_threshold);
    return assemble_quads(triplets, categories, policy, diagnostics, &sentiments);
  }
  return assemble_quads(triplets, categories, policy, diagnostics);
}

// --- debug JSON -------------------------------------------------------------

namespace {

json runs_json(const Eigen::MatrixXd& grid, const std::function<std::string(int)>& name) {
  json out = json::array();
  for (const auto& s : decode_categories(grid, 0.5)) {
    json span = s.span ? json::array({s.span->start, s.span->end}) : json(nullptr);
    out.push_back({{"label", name(s.label)}, {"span", span}});
  }
  return out;
}

void runs_from_json(const json& runs, Eigen::MatrixXd& grid,
                    const std::function<int(const std::string&)>& label) {
  for (const auto& r : runs) {
    const int col = label(r.at("label").get<std::string>());
    if (col < 0 || col >= grid.cols()) throw FormatError("run label out of range");
    if (r.at("span").is_null()) {
      grid(0, col) = 1.0;
      continue;
    }
    const int s = r.at("span").at(0).get<int>();
    const int e = r.at("span").at(1).get<int>();
    if (s < 0 || e < s || e + 1 >= grid.rows()) throw FormatError("run span out of range");
    mark_span(grid, Span{s, e}, col);
  }
}

}  // namespace

json encoding_to_json(const SampleEncoding& enc, const TagSchema& schema,
                      const CategoryVocab& vocab) {
  const auto& m = enc.tag_matrix;
  json cells = json::array();
  for (int i = 0; i < m.size(); ++i)
    for (int j = 0; j < m.size(); ++j) {
      const auto tags = m.tags(i, j);
      if (tags.empty()) continue;
      json names = json::array();
      for (int t : tags) names.push_back(schema.tag_name(t));
      cells.push_back(json::array({i, j, names}));
    }
  json j = {{"n", m.n_tokens()},
            {"cells", cells},
            {"category_runs", runs_json(enc.category_grid, [&](int c) { return vocab.name(c); })}};
  if (schema.variant() == SchemaVariant::Variant1)
    j["sentiment_runs"] = runs_json(enc.sentiment_grid, [](int s) {
      return std::string(sentiment_name(Sentiment(s)));
    });
  return j;
}

SampleEncoding encoding_from_json(const json& j, const TagSchema& schema,
                                  const CategoryVocab& vocab) {
  const int n = j.at("n").get<int>();
  if (n < 0) throw FormatError("negative token count");
  SampleEncoding enc;
  enc.variant = schema.variant();
  enc.tag_matrix = TagMatrix(n, schema.size());
  enc.category_grid = CategoryGrid::Zero(n + 1, vocab.size());
  enc.sentiment_grid = Eigen::MatrixXd::Zero(
      n + 1, schema.variant() == SchemaVariant::Variant1 ? kNumSentiments : 0);
  for (const auto& c : j.at("cells")) {
    const int row = c.at(0).get<int>();
    const int col = c.at(1).get<int>();
    for (const auto& name : c.at(2)) {
      const auto tag = schema.find_tag(name.get<std::string>());
      if (!tag) throw FormatError("tag '" + name.get<std::string>() + "' is not in the schema");
      try {
        enc.tag_matrix.set(row, col, *tag);
      } catch (const std::out_of_range& e) {
        throw FormatError(std::string("bad cell: ") + e.what());
      }
    }
  }
  runs_from_json(j.value("category_runs", json::array()), enc.category_grid,
                 [&](const std::string& name) { return vocab.id(name); });
  if (schema.variant() == SchemaVariant::Variant1)
    runs_from_json(j.value("sentiment_runs", json::array()), enc.sentiment_grid,
                   [](const std::string& name) { return static_cast<int>(parse_sentiment(name)); });
  return enc;
}

std::string_view policy_name(AttachPolicy p) {
  return p == AttachPolicy::BestOne ? "best_one" : "all_matching";
}

AttachPolicy parse_policy(std::string_view name) {
  if (name == "all_matching") return AttachPolicy::AllMatching;
  if (name == "best_one") return AttachPolicy::BestOne;
  throw Error("unknown attach policy '" + std::string(name) + "' (expected all_matching or best_one)");
}

}  // namespace asqp
