#include "asqp/model.hpp"

#include <cmath>

namespace asqp {

ModelShape ModelShape::make(const TagSchema& schema, const CategoryVocab& vocab, int dim, int hidden,
                            int table_rows) {
  ModelShape s;
  s.variant = schema.variant();
  s.dim = dim;
  s.hidden = hidden;
  s.n_tags = schema.size();
  s.n_categories = vocab.size();
  switch (schema.variant()) {
    case SchemaVariant::Standard: s.n_outputs = vocab.size(); break;
    case SchemaVariant::Variant1: s.n_outputs = vocab.size() + kNumSentiments; break;
    case SchemaVariant::Variant2: s.n_outputs = 0; break;
  }
  s.table_rows = table_rows;
  if (dim <= 0) throw ShapeMismatch("representation size must be positive");
  if (hidden <= 0 || hidden % s.n_tags != 0)
    throw ShapeMismatch("hidden size " + std::to_string(hidden) + " is not a multiple of the " +
                        std::to_string(s.n_tags) + " tags (try " +
                        std::to_string(compatible_hidden(std::max(hidden, 1), s.n_tags)) + ")");
  return s;
}

int compatible_hidden(int preferred, int n_tags) {
  return (preferred + n_tags - 1) / n_tags * n_tags;
}

Targets make_targets(const SampleEncoding& enc) {
  const int size = enc.tag_matrix.size();
  Targets t;
  switch (enc.variant) {
    case SchemaVariant::Standard:
      t.acd = enc.category_grid;
      break;
    case SchemaVariant::Variant1:
      t.acd.resize(size, enc.category_grid.cols() + enc.sentiment_grid.cols());
      t.acd << enc.category_grid, enc.sentiment_grid;
      break;
    case SchemaVariant::Variant2:
      t.acd = Eigen::MatrixXd(size, 0);
      break;
  }
  for (int tag = 0; tag < enc.tag_matrix.n_tags(); ++tag) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(size, size);
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        if (enc.tag_matrix.has(i, j, tag)) m(i, j) = 1.0;
    t.aosc.push_back(std::move(m));
  }
  return t;
}

namespace {

// Keeps round(rate * |pool|) entries of the pool, chosen by a partial
// Fisher-Yates shuffle.
template <typename Entry>
std::vector<Entry> draw(std::vector<Entry> pool, double rate, Rng& rng) {
  const auto keep = static_cast<std::size_t>(std::floor(rate * static_cast<double>(pool.size()) + 0.5));
  for (std::size_t k = 0; k < keep; ++k) {
    const auto j = k + static_cast<std::size_t>(uniform_below(rng, pool.size() - k));
    std::swap(pool[k], pool[j]);
  }
  pool.resize(keep);
  return pool;
}

}  // namespace

LossMask sample_negatives(const Targets& targets, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error("negative sampling rate must lie in [0, 1]");
  LossMask mask;

  const auto rows = targets.acd.rows();
  const auto cols = targets.acd.cols();
  mask.acd = BoolArray::Constant(rows, cols, false);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> acd_pool;
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (targets.acd(r, c) > 0.5)
        mask.acd(r, c) = true;
      else if (r > 0)
        acd_pool.emplace_back(r, c);
    }
  Rng acd_rng(mix_seed(seed, 1));
  for (auto [r, c] : draw(std::move(acd_pool), rate, acd_rng)) mask.acd(r, c) = true;

  struct Cell {
    std::size_t tag;
    Eigen::Index row, col;
  };
  std::vector<Cell> aosc_pool;
  for (std::size_t t = 0; t < targets.aosc.size(); ++t) {
    const auto& y = targets.aosc[t];
    mask.aosc.push_back(BoolArray::Constant(y.rows(), y.cols(), false));
    for (Eigen::Index c = 0; c < y.cols(); ++c)
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        if (y(r, c) > 0.5)
          mask.aosc[t](r, c) = true;
        else
          aosc_pool.push_back({t, r, c});
      }
  }
  Rng aosc_rng(mix_seed(seed, 2));
  for (const Cell& e : draw(std::move(aosc_pool), rate, aosc_rng)) mask.aosc[e.tag](e.row, e.col) = true;
  return mask;
}

}  // namespace asqp
