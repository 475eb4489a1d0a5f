// Two-head scorer over token representations H ((n+1) x d, row 0 = [NULL]).
//
//   ACD  : C = sigmoid(relu(H W1^T + b1) W2^T)                  (n+1) x K
//   AOSC : A = H Wa^T + ba,  O = H Wo^T + bo                    (n+1) x D
//          P[t](i, j) = sigmoid(<A(i, block t), O(j, block t)>)  t < T
//
// D is split into T equal blocks, one bilinear score per tag. Loss is masked
// binary cross-entropy on each head, normalised by its number of unmasked
// entries, combined as alpha * L_acd + beta * L_aosc. Gradients are written
// out by hand and checked against central differences in gradcheck.hpp.
//
// Everything is templated on the scalar type; training and checkpoints use
// double.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "asqp/codec.hpp"
#include "asqp/embedding.hpp"
#include "asqp/random.hpp"

namespace asqp {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// One (n+1) x (n+1) score matrix per tag.
template <typename Scalar>
using TagScores = std::vector<Matrix<Scalar>>;

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kProbEpsilon = 1e-7;
inline constexpr int kDefaultHidden = 400;

struct ModelShape {
  SchemaVariant variant = SchemaVariant::Standard;
  int dim = 0;         // d
  int hidden = 0;      // D
  int n_tags = 0;      // T
  int n_outputs = 0;   // K: categories, plus 3 sentiment columns under Variant1, 0 under Variant2
  int n_categories = 0;
  int table_rows = 0;  // trainable embedding rows, 0 for frozen providers

  int block() const { return hidden / n_tags; }
  bool has_acd() const { return n_outputs > 0; }

  // Throws ShapeMismatch unless hidden is a positive multiple of the tag count.
  static ModelShape make(const TagSchema& schema, const CategoryVocab& vocab, int dim, int hidden,
                         int table_rows = 0);

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

// Smallest multiple of the tag count that is at least `preferred`.
int compatible_hidden(int preferred, int n_tags);

template <typename Scalar>
struct ScorerParams {
  ModelShape shape;
  Matrix<Scalar> w1;         // d x d
  Matrix<Scalar> b1;         // d x 1
  Matrix<Scalar> w2;         // K x d
  Matrix<Scalar> wa;         // D x d
  Matrix<Scalar> ba;         // D x 1
  Matrix<Scalar> wo;         // D x d
  Matrix<Scalar> bo;         // D x 1
  Matrix<Scalar> embedding;  // V x d, empty for frozen providers

  static constexpr int kGroups = 8;
  static constexpr std::array<const char*, kGroups> kGroupNames = {
      "acd.w1", "acd.b1", "acd.w2", "aosc.wa", "aosc.ba", "aosc.wo", "aosc.bo", "embedding"};

  static ScorerParams zeros(const ModelShape& shape) {
    ScorerParams p;
    p.shape = shape;
    const int acd_dim = shape.has_acd() ? shape.dim : 0;
    p.w1 = Matrix<Scalar>::Zero(acd_dim, acd_dim);
    p.b1 = Matrix<Scalar>::Zero(acd_dim, 1);
    p.w2 = Matrix<Scalar>::Zero(shape.n_outputs, acd_dim);
    p.wa = Matrix<Scalar>::Zero(shape.hidden, shape.dim);
    p.ba = Matrix<Scalar>::Zero(shape.hidden, 1);
    p.wo = Matrix<Scalar>::Zero(shape.hidden, shape.dim);
    p.bo = Matrix<Scalar>::Zero(shape.hidden, 1);
    p.embedding = Matrix<Scalar>::Zero(shape.table_rows, shape.dim);
    return p;
  }

  // Weights and embeddings uniform in +-1/sqrt(d), biases zero.
  static ScorerParams initialized(const ModelShape& shape, std::uint64_t seed) {
    ScorerParams p = zeros(shape);
    Rng rng(mix_seed(seed, 0x5eed));
    const double bound = 1.0 / std::sqrt(static_cast<double>(shape.dim));
    auto fill = [&](Matrix<Scalar>& m) {
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
          m(r, c) = static_cast<Scalar>(uniform_in(rng, -bound, bound));
    };
    fill(p.w1);
    fill(p.w2);
    fill(p.wa);
    fill(p.wo);
    fill(p.embedding);
    return p;
  }

  template <typename F>
  void for_each(F&& f) {
    Matrix<Scalar>* g[kGroups] = {&w1, &b1, &w2, &wa, &ba, &wo, &bo, &embedding};
    for (int k = 0; k < kGroups; ++k) f(kGroupNames[k], *g[k]);
  }
  template <typename F>
  void for_each(F&& f) const {
    const Matrix<Scalar>* g[kGroups] = {&w1, &b1, &w2, &wa, &ba, &wo, &bo, &embedding};
    for (int k = 0; k < kGroups; ++k) f(kGroupNames[k], *g[k]);
  }

  template <typename To>
  ScorerParams<To> cast() const {
    ScorerParams<To> out;
    out.shape = shape;
    out.w1 = w1.template cast<To>();
    out.b1 = b1.template cast<To>();
    out.w2 = w2.template cast<To>();
    out.wa = wa.template cast<To>();
    out.ba = ba.template cast<To>();
    out.wo = wo.template cast<To>();
    out.bo = bo.template cast<To>();
    out.embedding = embedding.template cast<To>();
    return out;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const char*, const Matrix<Scalar>& m) { ok = ok && m.allFinite(); });
    return ok;
  }

  friend bool operator==(const ScorerParams& a, const ScorerParams& b) {
    if (!(a.shape == b.shape)) return false;
    bool same = true;
    const Matrix<Scalar>* ga[kGroups] = {&a.w1, &a.b1, &a.w2, &a.wa, &a.ba, &a.wo, &a.bo, &a.embedding};
    const Matrix<Scalar>* gb[kGroups] = {&b.w1, &b.b1, &b.w2, &b.wa, &b.ba, &b.wo, &b.bo, &b.embedding};
    for (int k = 0; k < kGroups && same; ++k)
      same = ga[k]->rows() == gb[k]->rows() && ga[k]->cols() == gb[k]->cols() && *ga[k] == *gb[k];
    return same;
  }
};

// --- targets and masks --------------------------------------------------------

struct Targets {
  Eigen::MatrixXd acd;                // (n+1) x K
  std::vector<Eigen::MatrixXd> aosc;  // T of (n+1) x (n+1)
};

Targets make_targets(const SampleEncoding& encoding);

struct LossMask {
  BoolArray acd;                // (n+1) x K
  std::vector<BoolArray> aosc;  // T of (n+1) x (n+1)

  long acd_count() const { return acd.count(); }
  long aosc_count() const {
    long c = 0;
    for (const auto& m : aosc) c += m.count();
    return c;
  }
};

// Positives are always kept. Of the gold-negative entries of each head,
// round(rate * count) are kept, drawn without replacement. The sentinel row of
// the ACD head is not part of its negative pool.
LossMask sample_negatives(const Targets& targets, double rate, std::uint64_t seed);
inline LossMask sample_negatives(const SampleEncoding& encoding, double rate, std::uint64_t seed) {
  return sample_negatives(make_targets(encoding), rate, seed);
}

struct LossBreakdown {
  double total = 0.0;
  double acd = 0.0;
  double aosc = 0.0;
  double alpha = 1.0;
  double beta = 1.0;
};

// --- forward ----------------------------------------------------------------

template <typename Scalar>
Matrix<Scalar> embed(const ModelInput& input, const ScorerParams<Scalar>& params) {
  if (input.trainable()) {
    if (params.embedding.rows() == 0)
      throw ShapeMismatch("trainable input but the parameters carry no embedding table");
    Matrix<Scalar> h(input.table_rows.size(), params.shape.dim);
    for (std::size_t i = 0; i < input.table_rows.size(); ++i) {
      const int r = input.table_rows[i];
      if (r < 0 || r >= params.embedding.rows()) throw ShapeMismatch("embedding row out of range");
      h.row(i) = params.embedding.row(r);
    }
    return h;
  }
  if (input.fixed.cols() != params.shape.dim)
    throw ShapeMismatch("input dimension " + std::to_string(input.fixed.cols()) +
                        " does not match model dimension " + std::to_string(params.shape.dim));
  return input.fixed.cast<Scalar>();
}

namespace detail {

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& z) {
  using S = typename Derived::Scalar;
  return z.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
}

template <typename Scalar>
void check_input(const Matrix<Scalar>& h, const ModelShape& shape) {
  if (h.cols() != shape.dim || h.rows() < 1)
    throw ShapeMismatch("H must be (n+1) x " + std::to_string(shape.dim));
}

}  // namespace detail

template <typename Scalar>
Matrix<Scalar> acd_preactivation(const Matrix<Scalar>& h, const ScorerParams<Scalar>& p) {
  detail::check_input(h, p.shape);
  return (h * p.w1.transpose()).rowwise() + p.b1.col(0).transpose();
}

template <typename Scalar>
Matrix<Scalar> acd_forward(const Matrix<Scalar>& h, const ScorerParams<Scalar>& p) {
  detail::check_input(h, p.shape);
  if (!p.shape.has_acd()) return Matrix<Scalar>(h.rows(), 0);
  const Matrix<Scalar> hidden = acd_preactivation(h, p).cwiseMax(Scalar(0));
  return detail::sigmoid(hidden * p.w2.transpose());
}

template <typename Scalar>
Matrix<Scalar> aspect_projection(const Matrix<Scalar>& h, const ScorerParams<Scalar>& p) {
  return (h * p.wa.transpose()).rowwise() + p.ba.col(0).transpose();
}

template <typename Scalar>
Matrix<Scalar> opinion_projection(const Matrix<Scalar>& h, const ScorerParams<Scalar>& p) {
  return (h * p.wo.transpose()).rowwise() + p.bo.col(0).transpose();
}

template <typename Scalar>
TagScores<Scalar> tag_scores(const Matrix<Scalar>& aspect, const Matrix<Scalar>& opinion,
                             const ModelShape& shape) {
  const int block = shape.block();
  TagScores<Scalar> out;
  out.reserve(shape.n_tags);
  for (int t = 0; t < shape.n_tags; ++t) {
    const Matrix<Scalar> logits =
        aspect.middleCols(t * block, block) * opinion.middleCols(t * block, block).transpose();
    out.push_back(detail::sigmoid(logits));
  }
  return out;
}

template <typename Scalar>
TagScores<Scalar> aosc_forward(const Matrix<Scalar>& h, const ScorerParams<Scalar>& p,
                               const TagSchema& schema) {
  detail::check_input(h, p.shape);
  if (schema.size() != p.shape.n_tags)
    throw ShapeMismatch("schema has " + std::to_string(schema.size()) + " tags, model " +
                        std::to_string(p.shape.n_tags));
  return tag_scores(aspect_projection(h, p), opinion_projection(h, p), p.shape);
}

template <typename Scalar>
struct ForwardPass {
  Matrix<Scalar> h;
  Matrix<Scalar> acd_pre;
  Matrix<Scalar> acd_prob;
  Matrix<Scalar> aspect;
  Matrix<Scalar> opinion;
  TagScores<Scalar> tag_prob;
};

template <typename Scalar>
ForwardPass<Scalar> forward(const ModelInput& input, const ScorerParams<Scalar>& p) {
  ForwardPass<Scalar> f;
  f.h = embed(input, p);
  detail::check_input(f.h, p.shape);
  if (p.shape.has_acd()) {
    f.acd_pre = acd_preactivation(f.h, p);
    f.acd_prob = detail::sigmoid(f.acd_pre.cwiseMax(Scalar(0)) * p.w2.transpose());
  } else {
    f.acd_pre = Matrix<Scalar>(f.h.rows(), 0);
    f.acd_prob = Matrix<Scalar>(f.h.rows(), 0);
  }
  f.aspect = aspect_projection(f.h, p);
  f.opinion = opinion_projection(f.h, p);
  f.tag_prob = tag_scores(f.aspect, f.opinion, p.shape);
  return f;
}

// --- loss -------------------------------------------------------------------

namespace detail {

inline double bce(double p, double y) {
  const double q = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
  return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

// d bce / d logit of the clamped loss: zero where the clamp is active.
inline double bce_logit_grad(double p, double y) {
  if (p < kProbEpsilon || p > 1.0 - kProbEpsilon) return 0.0;
  return p - y;
}

template <typename Scalar>
double masked_bce(const Matrix<Scalar>& prob, const Eigen::MatrixXd& target, const BoolArray& mask,
                  long& count) {
  double sum = 0.0;
  for (Eigen::Index c = 0; c < prob.cols(); ++c)
    for (Eigen::Index r = 0; r < prob.rows(); ++r)
      if (mask(r, c)) {
        sum += bce(static_cast<double>(prob(r, c)), target(r, c));
        ++count;
      }
  return sum;
}

template <typename Scalar>
void check_loss_shapes(const Matrix<Scalar>& acd, const TagScores<Scalar>& aosc, const Targets& t,
                       const LossMask& m) {
  const bool ok = acd.rows() == t.acd.rows() && acd.cols() == t.acd.cols() &&
                  m.acd.rows() == acd.rows() && m.acd.cols() == acd.cols() &&
                  aosc.size() == t.aosc.size() && aosc.size() == m.aosc.size();
  if (!ok) throw ShapeMismatch("predictions, targets and mask disagree in shape");
  for (std::size_t k = 0; k < aosc.size(); ++k)
    if (aosc[k].rows() != t.aosc[k].rows() || aosc[k].cols() != t.aosc[k].cols() ||
        m.aosc[k].rows() != aosc[k].rows() || m.aosc[k].cols() != aosc[k].cols())
      throw ShapeMismatch("tag score shape disagrees with targets");
}

}  // namespace detail

template <typename Scalar>
LossBreakdown joint_loss(const Matrix<Scalar>& acd_prob, const TagScores<Scalar>& tag_prob,
                         const Targets& targets, const LossMask& mask, double alpha = 1.0,
                         double beta = 1.0) {
  detail::check_loss_shapes(acd_prob, tag_prob, targets, mask);
  LossBreakdown out;
  out.alpha = alpha;
  out.beta = beta;
  long n_acd = 0;
  const double acd_sum = detail::masked_bce(acd_prob, targets.acd, mask.acd, n_acd);
  long n_aosc = 0;
  double aosc_sum = 0.0;
  for (std::size_t t = 0; t < tag_prob.size(); ++t)
    aosc_sum += detail::masked_bce(tag_prob[t], targets.aosc[t], mask.aosc[t], n_aosc);
  out.acd = n_acd ? acd_sum / n_acd : 0.0;
  out.aosc = n_aosc ? aosc_sum / n_aosc : 0.0;
  out.total = alpha * out.acd + beta * out.aosc;
  if (!std::isfinite(out.total)) throw NonFiniteLoss("joint loss is not finite");
  return out;
}

// --- backward ---------------------------------------------------------------

struct Example {
  ModelInput input;
  Targets targets;
  LossMask mask;
};

template <typename Scalar>
struct GradientResult {
  ScorerParams<Scalar> grad;
  LossBreakdown loss;  // batch means of each component
};

// Gradient of the batch-mean joint loss.
template <typename Scalar>
GradientResult<Scalar> backward(std::span<const Example> batch, const ScorerParams<Scalar>& p,
                                double alpha = 1.0, double beta = 1.0) {
  GradientResult<Scalar> out;
  out.grad = ScorerParams<Scalar>::zeros(p.shape);
  out.loss.alpha = alpha;
  out.loss.beta = beta;
  if (batch.empty()) return out;
  auto& g = out.grad;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const int block = p.shape.block();

  for (const Example& ex : batch) {
    const ForwardPass<Scalar> f = forward(ex.input, p);
    const LossBreakdown l = joint_loss(f.acd_prob, f.tag_prob, ex.targets, ex.mask, alpha, beta);
    out.loss.acd += l.acd * inv_batch;
    out.loss.aosc += l.aosc * inv_batch;

    const long n_acd = ex.mask.acd_count();
    const long n_aosc = ex.mask.aosc_count();
    const double acd_scale = n_acd ? alpha * inv_batch / n_acd : 0.0;
    const double aosc_scale = n_aosc ? beta * inv_batch / n_aosc : 0.0;

    Matrix<Scalar> dh = Matrix<Scalar>::Zero(f.h.rows(), f.h.cols());

    if (p.shape.has_acd()) {
      Matrix<Scalar> dlogit = Matrix<Scalar>::Zero(f.acd_prob.rows(), f.acd_prob.cols());
      for (Eigen::Index c = 0; c < dlogit.cols(); ++c)
        for (Eigen::Index r = 0; r < dlogit.rows(); ++r)
          if (ex.mask.acd(r, c))
            dlogit(r, c) = static_cast<Scalar>(
                acd_scale * detail::bce_logit_grad(static_cast<double>(f.acd_prob(r, c)),
                                                   ex.targets.acd(r, c)));
      const Matrix<Scalar> hidden = f.acd_pre.cwiseMax(Scalar(0));
      g.w2 += dlogit.transpose() * hidden;
      Matrix<Scalar> dpre = dlogit * p.w2;
      dpre = (f.acd_pre.array() > Scalar(0)).select(dpre, Scalar(0));
      g.w1 += dpre.transpose() * f.h;
      g.b1 += dpre.colwise().sum().transpose();
      dh += dpre * p.w1;
    }

    Matrix<Scalar> daspect = Matrix<Scalar>::Zero(f.aspect.rows(), f.aspect.cols());
    Matrix<Scalar> dopinion = Matrix<Scalar>::Zero(f.opinion.rows(), f.opinion.cols());
    for (int t = 0; t < p.shape.n_tags; ++t) {
      const auto& prob = f.tag_prob[t];
      Matrix<Scalar> dlogit = Matrix<Scalar>::Zero(prob.rows(), prob.cols());
      for (Eigen::Index c = 0; c < prob.cols(); ++c)
        for (Eigen::Index r = 0; r < prob.rows(); ++r)
          if (ex.mask.aosc[t](r, c))
            dlogit(r, c) = static_cast<Scalar>(
                aosc_scale *
                detail::bce_logit_grad(static_cast<double>(prob(r, c)), ex.targets.aosc[t](r, c)));
      daspect.middleCols(t * block, block) += dlogit * f.opinion.middleCols(t * block, block);
      dopinion.middleCols(t * block, block) += dlogit.transpose() * f.aspect.middleCols(t * block, block);
    }
    g.wa += daspect.transpose() * f.h;
    g.ba += daspect.colwise().sum().transpose();
    g.wo += dopinion.transpose() * f.h;
    g.bo += dopinion.colwise().sum().transpose();
    dh += daspect * p.wa + dopinion * p.wo;

    if (ex.input.trainable())
      for (std::size_t i = 0; i < ex.input.table_rows.size(); ++i)
        g.embedding.row(ex.input.table_rows[i]) += dh.row(i);
  }
  out.loss.total = alpha * out.loss.acd + beta * out.loss.aosc;
  if (!g.all_finite()) throw NonFiniteGradient("gradient contains non-finite values");
  return out;
}

// --- prediction -------------------------------------------------------------

struct Thresholds {
  double tag = 0.5;
  double category = 0.5;
  AttachPolicy policy = AttachPolicy::AllMatching;
};

// Thresholds the head outputs (strictly greater) into an encoding.
template <typename Scalar>
SampleEncoding threshold_outputs(const ForwardPass<Scalar>& f, const TagSchema& schema,
                                 int n_categories, const Thresholds& th) {
  const int size = static_cast<int>(f.h.rows());
  SampleEncoding enc;
  enc.variant = schema.variant();
  enc.tag_matrix = TagMatrix(size - 1, schema.size());
  for (int t = 0; t < schema.size(); ++t)
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        if ((i || j) && static_cast<double>(f.tag_prob[t](i, j)) > th.tag) enc.tag_matrix.set(i, j, t);

  enc.category_grid = CategoryGrid::Zero(size, n_categories);
  enc.sentiment_grid =
      Eigen::MatrixXd::Zero(size, schema.variant() == SchemaVariant::Variant1 ? kNumSentiments : 0);
  if (f.acd_prob.cols() > 0) {
    const Eigen::MatrixXd prob = f.acd_prob.template cast<double>();
    enc.category_grid = prob.leftCols(n_categories);
    if (schema.variant() == SchemaVariant::Variant1) enc.sentiment_grid = prob.rightCols(kNumSentiments);
    // The sentinel row is never supervised.
    enc.category_grid.row(0).setZero();
    if (enc.sentiment_grid.cols()) enc.sentiment_grid.row(0).setZero();
  }
  return enc;
}

template <typename Scalar>
QuadList predict(const Sample& sample, const ScorerParams<Scalar>& params,
                 const EmbeddingProvider& provider, const TagSchema& schema,
                 const CategoryVocab& vocab, const Thresholds& th = {},
                 DecodeDiagnostics* diagnostics = nullptr) {
  if (schema.size() != params.shape.n_tags || params.shape.n_categories != vocab.size())
    throw ShapeMismatch("parameters do not match the schema or vocabulary");
  const ForwardPass<Scalar> f = forward(provider.prepare(sample), params);
  const SampleEncoding enc = threshold_outputs(f, schema, vocab.size(), th);
  return decode_encoding(enc, schema, th.category, th.policy, diagnostics);
}

}  // namespace asqp
