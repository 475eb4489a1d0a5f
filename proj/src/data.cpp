#include "asqp/data.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "asqp/random.hpp"

namespace asqp {

namespace {

using nlohmann::json;

// Re-raises the in-flight library error with a "source:line: " prefix while
// keeping its type.
[[noreturn]] void rethrow_located(const std::string& where) {
  try {
    throw;
  } catch (const DuplicateQuad& e) {
    throw DuplicateQuad(where + e.what());
  } catch (const UnknownSentimentCode& e) {
    throw UnknownSentimentCode(where + e.what());
  } catch (const ParseError& e) {
    throw ParseError(where + e.what());
  } catch (const MisalignedSpan& e) {
    throw MisalignedSpan(where + e.what());
  } catch (const BothImplicit& e) {
    throw BothImplicit(where + e.what());
  } catch (const EmptyInput& e) {
    throw EmptyInput(where + e.what());
  } catch (const UnknownCategory& e) {
    throw UnknownCategory(where + e.what());
  } catch (const json::exception& e) {
    throw ParseError(where + e.what());
  }
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

Corpus start_corpus(const LoadOptions& options) {
  Corpus corpus;
  corpus.language = options.language;
  if (options.vocab_seed) corpus.vocab = *options.vocab_seed;
  return corpus;
}

void add_quad(Sample& sample, Quadruple q, const Corpus& corpus, const LoadOptions& options) {
  if (!(options.allow_both_implicit && !q.aspect && !q.opinion))
    validate_quad(q, sample.sentence.size(), corpus.vocab.size());
  for (const auto& g : sample.gold)
    if (g == q) throw DuplicateQuad("duplicate quadruple in record");
  sample.gold.push_back(q);
}

OptSpan convert_span(const Sentence& s, int start, int end, const LoadOptions& options,
                     const std::string& where) {
  std::vector<std::string> local;
  Span span = char_span_to_token_span(s, start, end, options.alignment, &local);
  if (options.warnings)
    for (auto& w : local) options.warnings->push_back(where + w);
  return span;
}

OptSpan json_span(const json& j, const Sentence& s, const LoadOptions& options,
                  const std::string& where) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_array() || j.size() != 2) throw ParseError("span must be [start, end] or null");
  return convert_span(s, j.at(0).get<int>(), j.at(1).get<int>(), options, where);
}

// --- Python-literal list parser for the legacy format ----------------------

class LiteralReader {
 public:
  explicit LiteralReader(std::string_view text) : text_(text) {}

  std::vector<std::vector<std::string>> records() {
    std::vector<std::vector<std::string>> out;
    skip_ws();
    if (at_end()) return out;
    expect('[');
    skip_ws();
    if (peek() == ']') {
      ++pos_;
      finish();
      return out;
    }
    for (;;) {
      out.push_back(string_list());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect(']');
      break;
    }
    finish();
    return out;
  }

 private:
  std::vector<std::string> string_list() {
    std::vector<std::string> items;
    skip_ws();
    expect('[');
    skip_ws();
    if (peek() == ']') {
      ++pos_;
      return items;
    }
    for (;;) {
      skip_ws();
      items.push_back(quoted());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect(']');
      return items;
    }
  }

  std::string quoted() {
    const char q = peek();
    if (q != '\'' && q != '"') fail("expected a quoted string");
    ++pos_;
    std::string s;
    while (!at_end() && peek() != q) {
      if (peek() == '\\' && pos_ + 1 < text_.size()) ++pos_;
      s.push_back(text_[pos_++]);
    }
    expect(q);
    return s;
  }

  void finish() {
    skip_ws();
    if (!at_end()) fail("trailing characters after quad list");
  }
  void skip_ws() {
    while (!at_end() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg + " at column " + std::to_string(pos_ + 1) + " of the quad list");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

OptSpan legacy_span(const std::string& field, const Sentence& s, const LoadOptions& options,
                    const std::string& where) {
  const auto comma = field.find(',');
  if (comma == std::string::npos) throw ParseError("span field '" + field + "' is not 's,e'");
  int start = 0;
  int end = 0;
  try {
    start = std::stoi(field.substr(0, comma));
    end = std::stoi(field.substr(comma + 1));
  } catch (const std::exception&) {
    throw ParseError("span field '" + field + "' is not 's,e'");
  }
  if (start == -1 && end == -1) return std::nullopt;
  return convert_span(s, start, end, options, where);
}

Sentiment legacy_sentiment(const std::string& code) {
  if (code == "0") return Sentiment::NEG;
  if (code == "1") return Sentiment::NEU;
  if (code == "2") return Sentiment::POS;
  throw UnknownSentimentCode("unknown sentiment code '" + code + "'");
}

std::string legacy_code(Sentiment s) {
  switch (s) {
    case Sentiment::NEG: return "0";
    case Sentiment::NEU: return "1";
    case Sentiment::POS: return "2";
  }
  return "?";
}

std::string python_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

// --- JSONL ------------------------------------------------------------------

Corpus parse_jsonl(std::istream& in, const LoadOptions& options, const std::string& source) {
  Corpus corpus = start_corpus(options);
  std::string line;
  int line_no = 0;
  bool seen_record = false;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (is_blank(line)) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    try {
      const json j = json::parse(line);
      if (!j.is_object()) throw ParseError("record is not a JSON object");
      if (!seen_record && j.contains("categories") && !j.contains("text")) {
        for (const auto& name : j.at("categories")) corpus.vocab.intern(name.get<std::string>());
        seen_record = true;
        continue;
      }
      seen_record = true;
      if (!j.contains("text")) throw ParseError("record has no \"text\" field");
      Sample sample;
      sample.id = j.contains("id") ? j.at("id").get<std::string>()
                                   : std::to_string(corpus.samples.size());
      sample.sentence = tokenize(j.at("text").get<std::string>(), options.language);
      for (const auto& jq : j.value("quads", json::array())) {
        Quadruple q;
        q.category = corpus.vocab.intern(jq.at("category").get<std::string>());
        q.aspect = json_span(jq.at("aspect"), sample.sentence, options, where);
        q.opinion = json_span(jq.at("opinion"), sample.sentence, options, where);
        q.sentiment = parse_sentiment(jq.at("sentiment").get<std::string>());
        add_quad(sample, q, corpus, options);
      }
      corpus.samples.push_back(std::move(sample));
    } catch (const Error&) {
      rethrow_located(where);
    } catch (const json::exception&) {
      rethrow_located(where);
    }
  }
  return corpus;
}

Corpus load_jsonl(const std::filesystem::path& path, const LoadOptions& options) {
  auto in = open_or_throw(path);
  return parse_jsonl(in, options, path.string());
}

nlohmann::json sample_to_json(const Sample& sample, const CategoryVocab& vocab,
                              const QuadList& quads) {
  json quads_json = json::array();
  auto span_json = [&](const OptSpan& s) -> json {
    if (!s) return nullptr;
    const auto [b, e] = token_span_to_char_span(sample.sentence, *s);
    return json::array({b, e});
  };
  for (const auto& q : quads) {
    json jq = json::object();
    jq["category"] = vocab.name(q.category);
    jq["aspect"] = span_json(q.aspect);
    jq["opinion"] = span_json(q.opinion);
    jq["sentiment"] = std::string(sentiment_name(q.sentiment));
    quads_json.push_back(std::move(jq));
  }
  json j = json::object();
  j["id"] = sample.id;
  j["text"] = sample.sentence.raw_text;
  j["quads"] = std::move(quads_json);
  return j;
}

void write_jsonl(std::ostream& out, const Corpus& corpus, bool with_header) {
  if (with_header) out << json{{"categories", corpus.vocab.names()}}.dump() << '\n';
  for (const auto& s : corpus.samples) out << sample_to_json(s, corpus.vocab, s.gold).dump() << '\n';
}

// --- legacy -----------------------------------------------------------------

Corpus parse_legacy(std::istream& in, const LoadOptions& options, const std::string& source) {
  Corpus corpus = start_corpus(options);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (is_blank(line)) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    try {
      const auto sep = line.find("####");
      if (sep == std::string::npos) throw ParseError("line has no '####' separator");
      Sample sample;
      sample.id = std::to_string(corpus.samples.size());
      sample.sentence = tokenize(line.substr(0, sep), options.language);
      for (const auto& rec : LiteralReader(std::string_view(line).substr(sep + 4)).records()) {
        if (rec.size() != 4) throw ParseError("quad record must have 4 fields");
        Quadruple q;
        q.aspect = legacy_span(rec[0], sample.sentence, options, where);
        q.category = corpus.vocab.intern(rec[1]);
        q.sentiment = legacy_sentiment(rec[2]);
        q.opinion = legacy_span(rec[3], sample.sentence, options, where);
        add_quad(sample, q, corpus, options);
      }
      corpus.samples.push_back(std::move(sample));
    } catch (const Error&) {
      rethrow_located(where);
    }
  }
  return corpus;
}

Corpus load_legacy(const std::filesystem::path& path, const LoadOptions& options) {
  auto in = open_or_throw(path);
  return parse_legacy(in, options, path.string());
}

void write_legacy(std::ostream& out, const Corpus& corpus) {
  for (const auto& s : corpus.samples) {
    out << s.sentence.raw_text << "####[";
    for (std::size_t k = 0; k < s.gold.size(); ++k) {
      const auto& q = s.gold[k];
      auto span = [&](const OptSpan& sp) {
        if (!sp) return std::string("-1,-1");
        const auto [b, e] = token_span_to_char_span(s.sentence, *sp);
        return std::to_string(b) + "," + std::to_string(e);
      };
      if (k) out << ", ";
      out << "[" << python_quote(span(q.aspect)) << ", " << python_quote(corpus.vocab.name(q.category))
          << ", " << python_quote(legacy_code(q.sentiment)) << ", " << python_quote(span(q.opinion))
          << "]";
    }
    out << "]\n";
  }
}

// --- split ------------------------------------------------------------------

std::array<int, 3> split_sizes(int n, const std::array<double, 3>& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw Error("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("split ratios must sum to 1");
  // The epsilon absorbs representation error such as 100 * 0.15 = 14.999...
  const int dev = static_cast<int>(std::floor(n * ratios[1] + 1e-9));
  const int test = static_cast<int>(std::floor(n * ratios[2] + 1e-9));
  return {n - dev - test, dev, test};
}

std::tuple<Corpus, Corpus, Corpus> split(const Corpus& corpus, const std::array<double, 3>& ratios,
                                         std::uint64_t seed) {
  const auto sizes = split_sizes(corpus.size(), ratios);
  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);

  std::array<Corpus, 3> parts;
  std::size_t cursor = 0;
  for (int p = 0; p < 3; ++p) {
    parts[p].vocab = corpus.vocab;
    parts[p].language = corpus.language;
    for (int k = 0; k < sizes[p]; ++k) parts[p].samples.push_back(corpus.samples[order[cursor++]]);
  }
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

// --- statistics -------------------------------------------------------------

StatsReport compute_stats(const Corpus& corpus) {
  StatsReport r;
  r.n_samples = corpus.size();
  r.n_categories = corpus.vocab.size();
  long words = 0;
  long aspect_words = 0;
  long opinion_words = 0;
  int n_aspects = 0;
  int n_opinions = 0;
  std::map<int, int> per_count;
  for (const auto& s : corpus.samples) {
    words += s.sentence.size();
    r.n_quads += static_cast<int>(s.gold.size());
    ++per_count[static_cast<int>(s.gold.size())];
    for (const auto& q : s.gold) {
      ++r.implicitness[static_cast<int>(implicitness(q))];
      ++r.sentiments[static_cast<int>(q.sentiment)];
      if (q.aspect) {
        aspect_words += q.aspect->length();
        ++n_aspects;
      }
      if (q.opinion) {
        opinion_words += q.opinion->length();
        ++n_opinions;
      }
    }
  }
  if (r.n_samples > 0) {
    r.words_per_sample = static_cast<double>(words) / r.n_samples;
    r.quads_per_sample = static_cast<double>(r.n_quads) / r.n_samples;
    for (auto [k, c] : per_count) r.density[k] = static_cast<double>(c) / r.n_samples;
  }
  if (n_aspects) r.words_per_aspect = static_cast<double>(aspect_words) / n_aspects;
  if (n_opinions) r.words_per_opinion = static_cast<double>(opinion_words) / n_opinions;
  return r;
}

nlohmann::json stats_to_json(const StatsReport& r) {
  json hist = json::array();
  for (auto [k, ratio] : r.density) hist.push_back({{"quads", k}, {"ratio", ratio}});
  return {
      {"n_samples", r.n_samples},
      {"words_per_sample", r.words_per_sample},
      {"n_categories", r.n_categories},
      {"n_quads", r.n_quads},
      {"quads_per_sample", r.quads_per_sample},
      {"EA&EO", r.implicitness[0]},
      {"EA&IO", r.implicitness[1]},
      {"IA&EO", r.implicitness[2]},
      {"IA&IO", r.implicitness[3]},
      {"POS", r.sentiments[0]},
      {"NEU", r.sentiments[1]},
      {"NEG", r.sentiments[2]},
      {"words_per_aspect", r.words_per_aspect},
      {"words_per_opinion", r.words_per_opinion},
      {"density", std::move(hist)},
  };
}

StatsReport stats_from_json(const nlohmann::json& j) {
  StatsReport r;
  r.n_samples = j.at("n_samples").get<int>();
  r.words_per_sample = j.at("words_per_sample").get<double>();
  r.n_categories = j.at("n_categories").get<int>();
  r.n_quads = j.at("n_quads").get<int>();
  r.quads_per_sample = j.at("quads_per_sample").get<double>();
  r.implicitness = {j.at("EA&EO").get<int>(), j.at("EA&IO").get<int>(), j.at("IA&EO").get<int>(),
                    j.at("IA&IO").get<int>()};
  r.sentiments = {j.at("POS").get<int>(), j.at("NEU").get<int>(), j.at("NEG").get<int>()};
  r.words_per_aspect = j.at("words_per_aspect").get<double>();
  r.words_per_opinion = j.at("words_per_opinion").get<double>();
  for (const auto& h : j.at("density")) r.density[h.at("quads").get<int>()] = h.at("ratio").get<double>();
  return r;
}

std::string format_stats_table(const StatsReport& r) {
  std::ostringstream os;
  os << std::fixed;
  auto row = [&](const std::string& key, const auto& value, int precision = 2) {
    os << std::left << std::setw(20) << key << std::right << std::setw(12)
       << std::setprecision(precision) << value << '\n';
  };
  row("#s", r.n_samples);
  row("#w/s", r.words_per_sample);
  row("#c", r.n_categories);
  row("#q", r.n_quads);
  row("#q/s", r.quads_per_sample);
  for (int c = 0; c < kNumImplicitness; ++c)
    row(std::string(implicitness_name(Implicitness(c))), r.implicitness[c]);
  row("#NEG", r.sentiments[static_cast<int>(Sentiment::NEG)]);
  row("#NEU", r.sentiments[static_cast<int>(Sentiment::NEU)]);
  row("#POS", r.sentiments[static_cast<int>(Sentiment::POS)]);
  row("Avg. #w/a", r.words_per_aspect);
  row("Avg. #w/o", r.words_per_opinion);
  os << "density (quads/sample -> ratio)\n";
  for (auto [k, ratio] : r.density) row("  " + std::to_string(k), ratio, 4);
  return os.str();
}

}  // namespace asqp
