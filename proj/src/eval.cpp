#include "asqp/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace asqp {

namespace {

using nlohmann::json;

void check_aligned(const std::vector<QuadList>& pred, const std::vector<QuadList>& gold) {
  if (pred.size() != gold.size())
    throw std::invalid_argument("prediction and gold lists cover different numbers of samples");
}

// Multiset intersection size.
long matches(const QuadList& pred, const QuadList& gold) {
  std::map<Quadruple, long> remaining;
  for (const auto& g : gold) ++remaining[g];
  long tp = 0;
  for (const auto& p : pred) {
    auto it = remaining.find(p);
    if (it != remaining.end() && it->second > 0) {
      --it->second;
      ++tp;
    }
  }
  return tp;
}

QuadList filter_class(const QuadList& quads, Implicitness c) {
  QuadList out;
  for (const auto& q : quads)
    if (implicitness(q) == c) out.push_back(q);
  return out;
}

struct Agreement {
  int total;
  bool aspect, opinion, category;

  auto key() const { return std::make_tuple(total, aspect, opinion, category); }
};

Agreement agreement(const Quadruple& p, const Quadruple& g) {
  Agreement a{0, p.aspect == g.aspect, p.opinion == g.opinion, p.category == g.category};
  a.total = a.aspect + a.opinion + a.category + (p.sentiment == g.sentiment);
  return a;
}

ErrorType first_disagreement(const Quadruple& p, const Quadruple& g) {
  if (p.category != g.category) return ErrorType::Category;
  if (p.aspect != g.aspect) return ErrorType::Aspect;
  if (p.opinion != g.opinion) return ErrorType::Opinion;
  return ErrorType::Sentiment;
}

}  // namespace

Metrics Metrics::from_counts(long tp, long n_pred, long n_gold) {
  Metrics m;
  m.tp = tp;
  m.n_pred = n_pred;
  m.n_gold = n_gold;
  m.precision = n_pred ? static_cast<double>(tp) / n_pred : 0.0;
  m.recall = n_gold ? static_cast<double>(tp) / n_gold : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

Metrics strict_quad_prf(const std::vector<QuadList>& pred, const std::vector<QuadList>& gold) {
  check_aligned(pred, gold);
  long tp = 0, n_pred = 0, n_gold = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    tp += matches(pred[k], gold[k]);
    n_pred += static_cast<long>(pred[k].size());
    n_gold += static_cast<long>(gold[k].size());
  }
  return Metrics::from_counts(tp, n_pred, n_gold);
}

Metrics strict_quad_prf(const QuadList& pred, const QuadList& gold) {
  return strict_quad_prf(std::vector<QuadList>{pred}, std::vector<QuadList>{gold});
}

BreakdownReport breakdown_by_implicitness(const std::vector<QuadList>& pred,
                                          const std::vector<QuadList>& gold) {
  check_aligned(pred, gold);
  BreakdownReport r;
  for (int c = 0; c < kNumImplicitness; ++c) {
    std::vector<QuadList> p, g;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      p.push_back(filter_class(pred[k], Implicitness(c)));
      g.push_back(filter_class(gold[k], Implicitness(c)));
    }
    r.by_class[c] = strict_quad_prf(p, g);
  }
  return r;
}

std::string_view error_type_name(ErrorType t) {
  switch (t) {
    case ErrorType::Category: return "category";
    case ErrorType::Aspect: return "aspect";
    case ErrorType::Opinion: return "opinion";
    case ErrorType::Sentiment: return "sentiment";
  }
  return "?";
}

ErrorReport error_analysis(const std::vector<QuadList>& pred, const std::vector<QuadList>& gold,
                           int exemplar_cap) {
  check_aligned(pred, gold);
  ErrorReport r;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    std::map<Quadruple, long> remaining;
    for (const auto& g : gold[k]) ++remaining[g];
    for (const auto& p : pred[k]) {
      if (auto it = remaining.find(p); it != remaining.end() && it->second > 0) {
        --it->second;
        continue;
      }
      const Quadruple* best = nullptr;
      Agreement best_a{};
      for (const auto& g : gold[k]) {
        if (g == p) continue;
        const Agreement a = agreement(p, g);
        if (!best || a.key() > best_a.key()) {
          best = &g;
          best_a = a;
        }
      }
      const ErrorType type =
          (!best || best_a.total == 0) ? ErrorType::Aspect : first_disagreement(p, *best);
      const int t = static_cast<int>(type);
      ++r.counts[t];
      ++r.total;
      if (static_cast<int>(r.examples[t].size()) < exemplar_cap)
        r.examples[t].push_back(
            {static_cast<int>(k), p, best ? std::optional<Quadruple>(*best) : std::nullopt});
    }
  }
  for (int t = 0; t < kNumErrorTypes; ++t)
    r.percent[t] = r.total ? 100.0 * static_cast<double>(r.counts[t]) / r.total : 0.0;
  return r;
}

json metrics_to_json(const Metrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
          {"tp", m.tp},               {"n_pred", m.n_pred}, {"n_gold", m.n_gold}};
}

json breakdown_to_json(const BreakdownReport& r) {
  json j = json::object();
  for (int c = 0; c < kNumImplicitness; ++c)
    j[std::string(implicitness_name(Implicitness(c)))] = metrics_to_json(r.by_class[c]);
  return j;
}

json errors_to_json(const ErrorReport& r, const Corpus* corpus) {
  auto quad_json = [&](int sample, const Quadruple& q) -> json {
    auto span = [&](const OptSpan& s) -> json {
      if (!s) return nullptr;
      if (corpus) return span_text(corpus->samples.at(sample).sentence, *s);
      return json::array({s->start, s->end});
    };
    json category = corpus ? json(corpus->vocab.name(q.category)) : json(q.category);
    return {{"category", category},
            {"aspect", span(q.aspect)},
            {"opinion", span(q.opinion)},
            {"sentiment", std::string(sentiment_name(q.sentiment))}};
  };
  json j = {{"total", r.total}};
  for (int t = 0; t < kNumErrorTypes; ++t) {
    json examples = json::array();
    for (const auto& e : r.examples[t]) {
      json ex = {{"sample", e.sample}, {"pred", quad_json(e.sample, e.pred)}};
      ex["gold"] = e.gold ? quad_json(e.sample, *e.gold) : json(nullptr);
      examples.push_back(std::move(ex));
    }
    j[std::string(error_type_name(ErrorType(t)))] = {
        {"count", r.counts[t]}, {"percent", r.percent[t]}, {"examples", std::move(examples)}};
  }
  return j;
}

std::string format_eval_table(const Metrics& overall, const BreakdownReport& breakdown,
                              const ErrorReport& errors) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  auto row = [&](const std::string& name, const Metrics& m) {
    os << std::left << std::setw(10) << name << std::right << std::setw(10) << m.precision
       << std::setw(10) << m.recall << std::setw(10) << m.f1 << std::setw(8) << m.tp << std::setw(8)
       << m.n_pred << std::setw(8) << m.n_gold << '\n';
  };
  os << std::left << std::setw(10) << "" << std::right << std::setw(10) << "P" << std::setw(10) << "R"
     << std::setw(10) << "F1" << std::setw(8) << "tp" << std::setw(8) << "#pred" << std::setw(8)
     << "#gold" << '\n';
  row("overall", overall);
  for (int c = 0; c < kNumImplicitness; ++c)
    row(std::string(implicitness_name(Implicitness(c))), breakdown.by_class[c]);
  os << "\nerrors: " << errors.total << '\n';
  os << std::setprecision(2);
  for (int t = 0; t < kNumErrorTypes; ++t)
    os << "  " << std::left << std::setw(10) << error_type_name(ErrorType(t)) << std::right
       << std::setw(8) << errors.counts[t] << std::setw(9) << errors.percent[t] << "%\n";
  return os.str();
}

}  // namespace asqp
