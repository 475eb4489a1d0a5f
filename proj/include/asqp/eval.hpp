// Strict-match scoring, implicitness breakdown and error typology.
//
// Scoring is corpus-level micro: `pred[k]` and `gold[k]` hold the quads of
// sample k and counts are pooled over samples. A predicted quad is correct only
// when all four elements equal a gold quad of the same sample.
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asqp/core.hpp"
#include "asqp/data.hpp"

namespace asqp {

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0;
  long n_pred = 0;
  long n_gold = 0;

  static Metrics from_counts(long tp, long n_pred, long n_gold);
  friend bool operator==(const Metrics&, const Metrics&) = default;
};

// Each gold quad absorbs at most one matching prediction; repeated
// predictions still count in n_pred.
Metrics strict_quad_prf(const std::vector<QuadList>& pred, const std::vector<QuadList>& gold);
Metrics strict_quad_prf(const QuadList& pred, const QuadList& gold);

struct BreakdownReport {
  std::array<Metrics, kNumImplicitness> by_class;  // indexed by Implicitness

  const Metrics& operator[](Implicitness c) const { return by_class[static_cast<int>(c)]; }
};

// Gold and predicted quads are each bucketed by their own class.
BreakdownReport breakdown_by_implicitness(const std::vector<QuadList>& pred,
                                          const std::vector<QuadList>& gold);

enum class ErrorType { Category = 0, Aspect = 1, Opinion = 2, Sentiment = 3 };
inline constexpr int kNumErrorTypes = 4;
std::string_view error_type_name(ErrorType t);

struct ErrorExample {
  int sample = 0;
  Quadruple pred;
  std::optional<Quadruple> gold;  // closest gold quad, if the sample has one
};

struct ErrorReport {
  std::array<long, kNumErrorTypes> counts{};
  std::array<double, kNumErrorTypes> percent{};
  std::array<std::vector<ErrorExample>, kNumErrorTypes> examples;
  long total = 0;

  long operator[](ErrorType t) const { return counts[static_cast<int>(t)]; }
};

// Every unmatched prediction is compared with the gold quads of its sample
// (other than exact copies of itself). The one agreeing on the most elements
// wins, ties preferring an aspect match, then opinion, then category; the
// first disagreeing element in (category, aspect, opinion, sentiment) order
// names the error. No candidate or zero agreement counts as an aspect error.
ErrorReport error_analysis(const std::vector<QuadList>& pred, const std::vector<QuadList>& gold,
                           int exemplar_cap = 5);

nlohmann::json metrics_to_json(const Metrics& m);
nlohmann::json breakdown_to_json(const BreakdownReport& r);
// Exemplars are rendered with surface text when `corpus` is given.
nlohmann::json errors_to_json(const ErrorReport& r, const Corpus* corpus = nullptr);
std::string format_eval_table(const Metrics& overall, const BreakdownReport& breakdown,
                              const ErrorReport& errors);

}  // namespace asqp
