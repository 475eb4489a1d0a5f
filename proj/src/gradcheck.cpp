#include "asqp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace asqp {

double batch_loss(std::span<const Example> batch, const ScorerParams<double>& params, double alpha,
                  double beta) {
  double sum = 0.0;
  for (const auto& ex : batch) {
    const Matrix<double> h = embed(ex.input, params);
    const auto acd = acd_forward(h, params);
    const auto tags = tag_scores(aspect_projection(h, params), opinion_projection(h, params), params.shape);
    sum += joint_loss(acd, tags, ex.targets, ex.mask, alpha, beta).total;
  }
  return batch.empty() ? 0.0 : sum / static_cast<double>(batch.size());
}

GradCheckReport check_gradients(std::span<const Example> batch, const ScorerParams<double>& params,
                                double alpha, double beta, double step, double floor) {
  const auto analytic = backward<double>(batch, params, alpha, beta).grad;
  ScorerParams<double> probe = params;

  std::vector<Matrix<double>*> probe_groups;
  probe.for_each([&](const char*, Matrix<double>& m) { probe_groups.push_back(&m); });
  std::vector<const Matrix<double>*> grad_groups;
  analytic.for_each([&](const char*, const Matrix<double>& m) { grad_groups.push_back(&m); });

  GradCheckReport report;
  for (int k = 0; k < ScorerParams<double>::kGroups; ++k) {
    GroupError ge;
    ge.name = ScorerParams<double>::kGroupNames[k];
    Matrix<double>& m = *probe_groups[k];
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double saved = m(r, c);
        m(r, c) = saved + step;
        const double up = batch_loss(batch, probe, alpha, beta);
        m(r, c) = saved - step;
        const double down = batch_loss(batch, probe, alpha, beta);
        m(r, c) = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double a = (*grad_groups[k])(r, c);
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
        ge.max_rel_error = std::max(ge.max_rel_error, rel);
        ++ge.entries;
      }
    report.max_rel_error = std::max(report.max_rel_error, ge.max_rel_error);
    report.groups.push_back(ge);
  }
  return report;
}

GradCheckReport random_gradient_check(std::uint64_t seed, SchemaVariant variant) {
  Rng rng(mix_seed(seed, 0x6c));
  const int table_rows = 9;
  CategoryVocab vocab({"A#x", "B#y", "C#z"});
  const TagSchema schema(variant, vocab);
  const int dim = 4;
  const int hidden = 2 * schema.size();
  const ModelShape shape = ModelShape::make(schema, vocab, dim, hidden, table_rows);

  ScorerParams<double> params = ScorerParams<double>::initialized(shape, seed);
  // Non-zero biases so their gradients are exercised away from the symmetric point.
  for (auto* b : {&params.b1, &params.ba, &params.bo})
    for (Eigen::Index r = 0; r < b->rows(); ++r) (*b)(r, 0) = uniform_in(rng, -0.3, 0.3);

  std::vector<Example> batch;
  for (int e = 0; e < 3; ++e) {
    const int n = 3 + static_cast<int>(uniform_below(rng, 4));
    Example ex;
    ex.input.n_tokens = n;
    ex.input.table_rows.push_back(TrainableTable::kNullRow);
    for (int i = 0; i < n; ++i)
      ex.input.table_rows.push_back(1 + static_cast<int>(uniform_below(rng, table_rows - 1)));

    ex.targets.acd = Eigen::MatrixXd::Zero(n + 1, shape.n_outputs);
    for (Eigen::Index c = 0; c < ex.targets.acd.cols(); ++c)
      for (int r = 1; r <= n; ++r) ex.targets.acd(r, c) = uniform01(rng) < 0.3 ? 1.0 : 0.0;
    for (int t = 0; t < shape.n_tags; ++t) {
      Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n + 1, n + 1);
      for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j)
          if ((i || j) && uniform01(rng) < 0.2) y(i, j) = 1.0;
      ex.targets.aosc.push_back(std::move(y));
    }
    ex.mask = sample_negatives(ex.targets, 0.5, mix_seed(seed, e));
    batch.push_back(std::move(ex));
  }
  return check_gradients(batch, params);
}

}  // namespace asqp
