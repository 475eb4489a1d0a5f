// Generators and reference data shared by the unit tests and the acceptance
// binary.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asqp/codec.hpp"
#include "asqp/data.hpp"
#include "asqp/random.hpp"

namespace fixtures {

using namespace asqp;

inline const std::vector<std::string>& category_names() {
  static const std::vector<std::string> names = {"Display#General", "Battery#General", "Logistics#Speed",
                                                 "Price#Level",     "Camera#General",  "Overall#General"};
  return names;
}

struct GeneratorOptions {
  int min_tokens = 1;
  int max_tokens = 20;
  int max_quads = 5;
  // Under Variant1 sentiment lives on the anchor span, so a shared aspect
  // must keep one sentiment.
  bool shared_aspect_same_sentiment = false;
};

// Random sample whose quads the codec can represent without ambiguity:
// aspect and opinion spans are pairwise disjoint and never adjacent; an
// aspect may recur with the same category across different opinions, and a
// single (aspect, opinion, sentiment) may carry two categories.
inline Sample random_sample(Rng& rng, const CategoryVocab& vocab, const GeneratorOptions& opt = {},
                            std::string id = "g") {
  static const char* words[] = {"good", "screen", "fast", "battery", "price", "ok", ",", "very", "bad", "."};
  const int n = opt.min_tokens + static_cast<int>(uniform_below(rng, opt.max_tokens - opt.min_tokens + 1));
  std::string text;
  for (int i = 0; i < n; ++i) {
    if (i) text += ' ';
    text += words[uniform_below(rng, 10)];
  }
  Sample s;
  s.id = std::move(id);
  s.sentence = tokenize(text, LanguageMode::SpacePunct);

  std::vector<Span> pool;
  for (int pos = static_cast<int>(uniform_below(rng, 2)); pos < n;) {
    const int len = 1 + static_cast<int>(uniform_below(rng, 3));
    const int end = std::min(n - 1, pos + len - 1);
    pool.push_back(Span{pos, end});
    pos = end + 2 + static_cast<int>(uniform_below(rng, 2));
  }
  shuffle(pool, rng);

  struct Shareable {
    Span aspect;
    CategoryId category;
    Sentiment sentiment;
  };
  std::vector<Shareable> shareable;
  const int k = static_cast<int>(uniform_below(rng, opt.max_quads + 1));
  auto take = [&]() -> std::optional<Span> {
    if (pool.empty()) return std::nullopt;
    Span sp = pool.back();
    pool.pop_back();
    return sp;
  };
  auto category = [&] { return static_cast<CategoryId>(uniform_below(rng, vocab.size())); };
  auto sentiment = [&] { return static_cast<Sentiment>(uniform_below(rng, kNumSentiments)); };

  while (static_cast<int>(s.gold.size()) < k) {
    const double form = uniform01(rng);
    Quadruple quad;
    if (!shareable.empty() && form < 0.2) {
      auto opinion = take();
      if (!opinion) break;
      const Shareable& base = shareable[uniform_below(rng, shareable.size())];
      quad = Quadruple{base.category, base.aspect, opinion,
                       opt.shared_aspect_same_sentiment ? base.sentiment : sentiment()};
    } else if (form < 0.6) {
      auto aspect = take();
      auto opinion = take();
      if (!aspect || !opinion) break;
      quad = Quadruple{category(), aspect, opinion, sentiment()};
      if (uniform01(rng) < 0.15 && vocab.size() > 1 && static_cast<int>(s.gold.size()) + 2 <= k) {
        Quadruple twin = quad;
        twin.category = (quad.category + 1 + static_cast<CategoryId>(uniform_below(rng, vocab.size() - 1))) %
                        vocab.size();
        s.gold.push_back(twin);
      } else {
        shareable.push_back({*aspect, quad.category, quad.sentiment});
      }
    } else if (form < 0.8) {
      auto aspect = take();
      if (!aspect) break;
      quad = Quadruple{category(), aspect, std::nullopt, sentiment()};
      shareable.push_back({*aspect, quad.category, quad.sentiment});
    } else {
      auto opinion = take();
      if (!opinion) break;
      quad = Quadruple{category(), std::nullopt, opinion, sentiment()};
    }
    s.gold.push_back(quad);
  }
  std::sort(s.gold.begin(), s.gold.end());
  s.gold.erase(std::unique(s.gold.begin(), s.gold.end()), s.gold.end());
  return s;
}

inline Corpus random_corpus(std::uint64_t seed, int n_samples, const GeneratorOptions& opt = {}) {
  Corpus c;
  c.vocab = CategoryVocab(category_names());
  Rng rng(mix_seed(seed, 0xc0));
  for (int k = 0; k < n_samples; ++k)
    c.samples.push_back(random_sample(rng, c.vocab, opt, "r" + std::to_string(k)));
  return c;
}

inline QuadList sorted(QuadList q) {
  std::sort(q.begin(), q.end());
  return q;
}

// Every cell except (0,0) gets each tag independently with a per-matrix
// density, so sparse and crowded matrices both occur.
inline TagMatrix random_tag_matrix(Rng& rng, int n, int n_tags) {
  TagMatrix m(n, n_tags);
  const double density = uniform_in(rng, 0.03, 0.35);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      for (int t = 0; t < n_tags; ++t)
        if ((i || j) && uniform01(rng) < density) m.set(i, j, t);
  return m;
}

// Corpus a context-free scorer can fit exactly: every labelled word belongs to
// one phrase, each aspect phrase has a fixed category, each opinion phrase a
// fixed sentiment, and an aspect pairs with an opinion exactly when both come
// from the same group. Phrases used without a partner never get one.
inline Corpus overfit_corpus(std::uint64_t seed, int n_samples, int n_categories = 8, int n_groups = 4) {
  struct Phrase {
    std::vector<std::string> words;
    CategoryId category;
    Sentiment sentiment;
    int group;
  };
  Rng rng(mix_seed(seed, 0x0f));
  Corpus c;
  std::vector<std::string> names;
  for (int k = 0; k < n_categories; ++k) names.push_back("Cat" + std::to_string(k) + "#General");
  c.vocab = CategoryVocab(names);

  int word_id = 0;
  auto phrase = [&](const char* stem, CategoryId cat, Sentiment s, int group) {
    Phrase p{{}, cat, s, group};
    const int len = 1 + static_cast<int>(uniform_below(rng, 2));
    for (int w = 0; w < len; ++w) p.words.push_back(stem + std::to_string(word_id++));
    return p;
  };
  std::vector<Phrase> aspects, opinions, lone_aspects, lone_opinions;
  for (int k = 0; k < 2 * n_categories; ++k)
    aspects.push_back(phrase("asp", k % n_categories, Sentiment::POS, k % n_groups));
  for (int k = 0; k < 3 * n_groups; ++k)
    opinions.push_back(phrase("op", 0, static_cast<Sentiment>(k % kNumSentiments), k % n_groups));
  for (int k = 0; k < n_categories / 2; ++k) {
    lone_aspects.push_back(phrase("lasp", (2 * k) % n_categories, static_cast<Sentiment>(k % 3), -1));
    lone_opinions.push_back(phrase("lop", (2 * k + 1) % n_categories, static_cast<Sentiment>((k + 1) % 3), -1));
  }
  const char* fillers[] = {"the", "and", "but", "it", "is", "so"};

  for (int n = 0; n < n_samples; ++n) {
    // Units: a paired (aspect, opinion) from distinct groups, or a lone phrase.
    struct Unit {
      const Phrase* first;
      const Phrase* second;
      bool aspect_first;
      int kind;  // 0 pair, 1 lone aspect, 2 lone opinion
    };
    std::vector<Unit> units;
    std::vector<int> groups(n_groups);
    std::iota(groups.begin(), groups.end(), 0);
    shuffle(groups, rng);
    const int k = 1 + static_cast<int>(uniform_below(rng, 3));
    std::vector<bool> used_lone_a(lone_aspects.size()), used_lone_o(lone_opinions.size());
    for (int u = 0; u < k; ++u) {
      const double r = uniform01(rng);
      if (r < 0.6 && u < n_groups) {
        const int g = groups[u];
        std::vector<const Phrase*> ga, go;
        for (const auto& p : aspects) if (p.group == g) ga.push_back(&p);
        for (const auto& p : opinions) if (p.group == g) go.push_back(&p);
        units.push_back({ga[uniform_below(rng, ga.size())], go[uniform_below(rng, go.size())],
                         uniform01(rng) < 0.7, 0});
      } else if (r < 0.8) {
        const auto i = uniform_below(rng, lone_aspects.size());
        if (used_lone_a[i]) continue;
        used_lone_a[i] = true;
        units.push_back({&lone_aspects[i], nullptr, true, 1});
      } else {
        const auto i = uniform_below(rng, lone_opinions.size());
        if (used_lone_o[i]) continue;
        used_lone_o[i] = true;
        units.push_back({&lone_opinions[i], nullptr, true, 2});
      }
    }

    std::vector<std::string> words;
    auto filler = [&] { words.push_back(fillers[uniform_below(rng, 6)]); };
    auto place = [&](const Phrase& p) {
      filler();
      const int start = static_cast<int>(words.size());
      words.insert(words.end(), p.words.begin(), p.words.end());
      return Span{start, static_cast<int>(words.size()) - 1};
    };
    Sample s;
    s.id = "ov" + std::to_string(n);
    QuadList quads;
    for (const Unit& u : units) {
      if (u.kind == 0) {
        const Phrase& a = *u.first;
        const Phrase& o = *u.second;
        Span sa, so;
        if (u.aspect_first) {
          sa = place(a);
          so = place(o);
        } else {
          so = place(o);
          sa = place(a);
        }
        quads.push_back({a.category, sa, so, o.sentiment});
      } else if (u.kind == 1) {
        quads.push_back({u.first->category, place(*u.first), std::nullopt, u.first->sentiment});
      } else {
        quads.push_back({u.first->category, std::nullopt, place(*u.first), u.first->sentiment});
      }
    }
    filler();
    std::string text;
    for (std::size_t w = 0; w < words.size(); ++w) text += (w ? " " : "") + words[w];
    s.sentence = tokenize(text, LanguageMode::SpacePunct);
    std::sort(quads.begin(), quads.end());
    s.gold = std::move(quads);
    c.samples.push_back(std::move(s));
  }
  return c;
}

// --- hand tally ----------------------------------------------------------------

inline nlohmann::json load_tally() {
  std::ifstream in(std::string(ASQP_TEST_DATA) + "/mini_corpus.tally.json");
  return nlohmann::json::parse(in);
}

// Field-by-field comparison against the tally; returns the names of the
// fields that differ. Means stored as {num, den} are compared to 1e-12.
inline std::vector<std::string> stats_mismatches(const StatsReport& r, const nlohmann::json& tally) {
  std::vector<std::string> bad;
  auto number = [](const nlohmann::json& v) {
    return v.is_object() ? v.at("num").get<double>() / v.at("den").get<double>() : v.get<double>();
  };
  auto check = [&](const char* key, double got) {
    if (std::abs(got - number(tally.at(key))) > 1e-12) bad.push_back(key);
  };
  check("n_samples", r.n_samples);
  check("words_per_sample", r.words_per_sample);
  check("n_categories", r.n_categories);
  check("n_quads", r.n_quads);
  check("quads_per_sample", r.quads_per_sample);
  check("EA&EO", r.implicitness[0]);
  check("EA&IO", r.implicitness[1]);
  check("IA&EO", r.implicitness[2]);
  check("IA&IO", r.implicitness[3]);
  check("POS", r.sentiments[0]);
  check("NEU", r.sentiments[1]);
  check("NEG", r.sentiments[2]);
  check("words_per_aspect", r.words_per_aspect);
  check("words_per_opinion", r.words_per_opinion);
  const auto& density = tally.at("density");
  bool same = density.size() == r.density.size();
  for (const auto& h : density) {
    auto it = r.density.find(h.at("quads").get<int>());
    same = same && it != r.density.end() && std::abs(it->second - h.at("ratio").get<double>()) <= 1e-12;
  }
  if (!same) bad.push_back("density");
  return bad;
}

}  // namespace fixtures
