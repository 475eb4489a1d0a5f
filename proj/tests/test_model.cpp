#include <doctest.h>

#include <cmath>

#include "asqp/gradcheck.hpp"
#include "asqp/model.hpp"
#include "fixtures.hpp"

using namespace asqp;

namespace {

ModelShape shape_for(const TagSchema& schema, const CategoryVocab& vocab, int dim, int hidden,
                     int table_rows = 0) {
  return ModelShape::make(schema, vocab, dim, hidden, table_rows);
}

ModelInput fixed_input(const Eigen::MatrixXd& h) {
  ModelInput in;
  in.n_tokens = static_cast<int>(h.rows()) - 1;
  in.fixed = h;
  return in;
}

Example random_example(Rng& rng, const ModelShape& shape, int n, double rate) {
  Example ex;
  ex.input = fixed_input(Eigen::MatrixXd::NullaryExpr(n + 1, shape.dim, [&] { return uniform_in(rng, -1, 1); }));
  ex.targets.acd = Eigen::MatrixXd::Zero(n + 1, shape.n_outputs);
  for (Eigen::Index c = 0; c < ex.targets.acd.cols(); ++c)
    for (int r = 1; r <= n; ++r) ex.targets.acd(r, c) = uniform01(rng) < 0.3;
  for (int t = 0; t < shape.n_tags; ++t) {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n + 1, n + 1);
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) y(i, j) = (i || j) && uniform01(rng) < 0.2;
    ex.targets.aosc.push_back(y);
  }
  ex.mask = sample_negatives(ex.targets, rate, rng());
  return ex;
}

}  // namespace

TEST_CASE("zero weights give one half everywhere") {
  const CategoryVocab vocab({"A", "B"});
  const auto p = ScorerParams<double>::zeros(shape_for(TagSchema::standard(), vocab, 3, 10));
  const Eigen::MatrixXd h = Eigen::MatrixXd::Random(4, 3);
  const auto acd = acd_forward(h, p);
  CHECK(acd.rows() == 4);
  CHECK(acd.cols() == 2);
  CHECK((acd.array() == 0.5).all());
  const auto tags = aosc_forward(h, p, TagSchema::standard());
  REQUIRE(tags.size() == 5);
  for (const auto& m : tags) CHECK((m.array() == 0.5).all());
}

TEST_CASE("category head against a hand computation") {
  // h = [1, -2]; W1 h + b1 = [0.1, -1.8]; relu -> [0.1, 0]; W2 -> 0.2.
  auto p = ScorerParams<double>::zeros(shape_for(TagSchema::standard(), CategoryVocab({"A"}), 2, 10));
  p.w1 << 0.5, 0.25, -1.0, 0.5;
  p.b1 << 0.1, 0.2;
  p.w2 << 2.0, 3.0;
  Eigen::MatrixXd h(2, 2);
  h << 0.0, 0.0, 1.0, -2.0;
  const auto c = acd_forward(h, p);
  CHECK(c(1, 0) == doctest::Approx(0.549833997312478).epsilon(1e-14));
  // Row 0: relu([0.1, 0.2]) . [2, 3] = 0.8.
  CHECK(c(0, 0) == doctest::Approx(0.6899744811276125).epsilon(1e-14));
}

TEST_CASE("tag head against a hand computation") {
  // a_i = h_i per block; block t of o_j = [t * h_j0 + 0.5, -h_j1].
  auto p = ScorerParams<double>::zeros(shape_for(TagSchema::standard(), CategoryVocab({"A"}), 2, 10));
  for (int t = 0; t < 5; ++t) {
    p.wa(2 * t, 0) = 1.0;
    p.wa(2 * t + 1, 1) = 1.0;
    p.wo(2 * t, 0) = t;
    p.wo(2 * t + 1, 1) = -1.0;
    p.bo(2 * t, 0) = 0.5;
  }
  Eigen::MatrixXd h(3, 2);
  h << 0, 0, 1, 0, 0, 1;
  const auto P = aosc_forward(h, p, TagSchema::standard());
  CHECK(P[2](1, 1) == doctest::Approx(0.9241418199787566).epsilon(1e-14));
  CHECK(P[0](1, 1) == doctest::Approx(0.6224593312018546).epsilon(1e-14));
  CHECK(P[3](2, 2) == doctest::Approx(0.2689414213699951).epsilon(1e-14));
  CHECK(P[4](1, 2) == doctest::Approx(0.6224593312018546).epsilon(1e-14));
  CHECK(P[1](0, 2) == 0.5);
  CHECK(P[1](2, 0) == 0.5);
}

TEST_CASE("shapes and variants") {
  const CategoryVocab vocab({"A#x", "B#y", "C#z"});
  CHECK_THROWS_AS(shape_for(TagSchema::standard(), vocab, 4, 12), ShapeMismatch);
  CHECK(compatible_hidden(400, 11) == 407);
  const ModelShape v2 = shape_for(TagSchema::variant2(vocab), vocab, 4, 22);
  CHECK(v2.n_tags == 11);
  CHECK_FALSE(v2.has_acd());
  const auto p = ScorerParams<double>::initialized(v2, 1);
  const Eigen::MatrixXd h = Eigen::MatrixXd::Random(5, 4);
  CHECK(aosc_forward(h, p, TagSchema::variant2(vocab)).size() == 11);
  CHECK(acd_forward(h, p).cols() == 0);
  CHECK(shape_for(TagSchema::variant1(), vocab, 4, 6).n_outputs == 6);
  CHECK_THROWS_AS(aosc_forward(h, p, TagSchema::standard()), ShapeMismatch);
  CHECK_THROWS_AS(acd_forward(Eigen::MatrixXd(Eigen::MatrixXd::Random(5, 3)), p), ShapeMismatch);
}

TEST_CASE("initialisation bounds") {
  const ModelShape s = shape_for(TagSchema::standard(), CategoryVocab({"A"}), 16, 10, 7);
  const auto p = ScorerParams<double>::initialized(s, 3);
  CHECK(p.wa.cwiseAbs().maxCoeff() <= 0.25);
  CHECK(p.embedding.cwiseAbs().maxCoeff() <= 0.25);
  CHECK(p.wa.cwiseAbs().maxCoeff() > 0.2);
  CHECK(p.ba.isZero());
  CHECK(p.b1.isZero());
  CHECK(p == ScorerParams<double>::initialized(s, 3));
  CHECK_FALSE(p == ScorerParams<double>::initialized(s, 4));
}

TEST_CASE("tag scores follow a token permutation") {
  const CategoryVocab vocab({"A"});
  const ModelShape s = shape_for(TagSchema::standard(), vocab, 5, 15);
  const auto p = ScorerParams<double>::initialized(s, 8);
  Rng rng(2);
  const int n = 6;
  const Eigen::MatrixXd h = Eigen::MatrixXd::NullaryExpr(n + 1, 5, [&] { return uniform_in(rng, -1, 1); });
  std::vector<int> perm = {0, 3, 1, 6, 2, 5, 4};
  Eigen::MatrixXd hp(n + 1, 5);
  for (int i = 0; i <= n; ++i) hp.row(i) = h.row(perm[i]);
  const auto a = aosc_forward(h, p, TagSchema::standard());
  const auto b = aosc_forward(hp, p, TagSchema::standard());
  for (int t = 0; t < 5; ++t)
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) CHECK(b[t](i, j) == a[t](perm[i], perm[j]));
}

TEST_CASE("loss values") {
  const CategoryVocab vocab({"A", "B"});
  const ModelShape s = shape_for(TagSchema::standard(), vocab, 3, 10);
  Rng rng(4);
  Example ex = random_example(rng, s, 4, 0.4);
  const auto zero = ScorerParams<double>::zeros(s);
  const auto f = forward(ex.input, zero);
  const LossBreakdown l = joint_loss(f.acd_prob, f.tag_prob, ex.targets, ex.mask, 1.0, 1.0);
  CHECK(l.acd == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(l.aosc == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const auto p = ScorerParams<double>::initialized(s, 1);
  const auto g = forward(ex.input, p);
  for (double alpha : {0.0, 0.3, 1.0})
    for (double beta : {0.0, 0.7, 1.0}) {
      const LossBreakdown lb = joint_loss(g.acd_prob, g.tag_prob, ex.targets, ex.mask, alpha, beta);
      CHECK(lb.total == alpha * lb.acd + beta * lb.aosc);
      if (alpha == 0.0) CHECK(lb.total == beta * lb.aosc);
    }

  // Flipping an unmasked bit changes the loss.
  Targets flipped = ex.targets;
  flipped.aosc[2](1, 1) = 1.0 - flipped.aosc[2](1, 1);
  ex.mask.aosc[2](1, 1) = true;
  CHECK(joint_loss(g.acd_prob, g.tag_prob, flipped, ex.mask, 1, 1).total !=
        joint_loss(g.acd_prob, g.tag_prob, ex.targets, ex.mask, 1, 1).total);

  Eigen::MatrixXd bad = g.acd_prob;
  ex.mask.acd(1, 1) = true;
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(joint_loss(bad, g.tag_prob, ex.targets, ex.mask, 1, 1), NonFiniteLoss);
}

TEST_CASE("saturated correct predictions give a near-zero loss and gradient") {
  const CategoryVocab vocab({"A", "B"});
  const ModelShape s = shape_for(TagSchema::standard(), vocab, 3, 10);
  auto p = ScorerParams<double>::zeros(s);
  p.b1.setConstant(20.0);
  p.w2.setConstant(-1.0);
  p.ba.setConstant(10.0);
  p.bo.setConstant(-10.0);
  Example ex;
  ex.input = fixed_input(Eigen::MatrixXd::Random(5, 3));
  ex.targets.acd = Eigen::MatrixXd::Zero(5, 2);
  ex.targets.aosc.assign(5, Eigen::MatrixXd::Zero(5, 5));
  ex.mask = sample_negatives(ex.targets, 1.0, 0);
  const auto r = backward<double>(std::span(&ex, 1), p, 1.0, 1.0);
  CHECK(r.loss.total <= 2.0 * std::abs(std::log(1.0 - kProbEpsilon)) + 1e-15);
  double worst = 0.0;
  r.grad.for_each([&](const char*, const Eigen::MatrixXd& m) {
    if (m.size()) worst = std::max(worst, m.cwiseAbs().maxCoeff());
  });
  CHECK(worst <= 1e-6);
}

TEST_CASE("negative sampling") {
  const CategoryVocab vocab({"A", "B", "C"});
  const ModelShape s = shape_for(TagSchema::standard(), vocab, 3, 10);
  Rng rng(6);
  const Example ex = random_example(rng, s, 7, 0.0);
  long acd_neg = 0, aosc_neg = 0;
  for (Eigen::Index c = 0; c < ex.targets.acd.cols(); ++c)
    for (Eigen::Index r = 1; r < ex.targets.acd.rows(); ++r) acd_neg += ex.targets.acd(r, c) == 0.0;
  for (const auto& y : ex.targets.aosc) aosc_neg += (y.array() == 0.0).count();

  for (double rate : {0.0, 0.4, 1.0}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const LossMask m = sample_negatives(ex.targets, rate, seed);
      long acd_kept = 0, aosc_kept = 0;
      for (Eigen::Index c = 0; c < m.acd.cols(); ++c)
        for (Eigen::Index r = 0; r < m.acd.rows(); ++r) {
          if (ex.targets.acd(r, c) > 0.5) CHECK(m.acd(r, c));
          else acd_kept += m.acd(r, c);
        }
      CHECK_FALSE(m.acd.row(0).any());
      for (int t = 0; t < s.n_tags; ++t)
        for (Eigen::Index c = 0; c < m.aosc[t].cols(); ++c)
          for (Eigen::Index r = 0; r < m.aosc[t].rows(); ++r) {
            if (ex.targets.aosc[t](r, c) > 0.5) CHECK(m.aosc[t](r, c));
            else aosc_kept += m.aosc[t](r, c);
          }
      CHECK(std::abs(acd_kept - rate * acd_neg) <= 1.0);
      CHECK(std::abs(aosc_kept - rate * aosc_neg) <= 1.0);
      if (rate == 0.0) CHECK(aosc_kept == 0);
      if (rate == 1.0) CHECK(aosc_kept == aosc_neg);
      if (rate == 1.0) CHECK(acd_kept == acd_neg);
    }
  }
  const LossMask m1 = sample_negatives(ex.targets, 0.4, 9), m2 = sample_negatives(ex.targets, 0.4, 9);
  for (std::size_t t = 0; t < m1.aosc.size(); ++t) CHECK((m1.aosc[t] == m2.aosc[t]).all());
  CHECK_THROWS(sample_negatives(ex.targets, 1.5, 0));
}

TEST_CASE("masked entries have no gradient") {
  const CategoryVocab vocab({"A", "B"});
  const ModelShape s = shape_for(TagSchema::standard(), vocab, 4, 10);
  const auto p = ScorerParams<double>::initialized(s, 12);
  Rng rng(13);
  Example ex = random_example(rng, s, 5, 0.4);
  const auto before = backward<double>(std::span(&ex, 1), p, 1.0, 1.0).grad;
  for (int t = 0; t < s.n_tags; ++t)
    for (Eigen::Index c = 0; c < ex.mask.aosc[t].cols(); ++c)
      for (Eigen::Index r = 0; r < ex.mask.aosc[t].rows(); ++r)
        if (!ex.mask.aosc[t](r, c)) ex.targets.aosc[t](r, c) = 1.0 - ex.targets.aosc[t](r, c);
  for (Eigen::Index c = 0; c < ex.mask.acd.cols(); ++c)
    for (Eigen::Index r = 0; r < ex.mask.acd.rows(); ++r)
      if (!ex.mask.acd(r, c)) ex.targets.acd(r, c) = 1.0 - ex.targets.acd(r, c);
  CHECK(backward<double>(std::span(&ex, 1), p, 1.0, 1.0).grad == before);
}

TEST_CASE("analytic gradients match finite differences") {
  for (SchemaVariant v : {SchemaVariant::Standard, SchemaVariant::Variant1, SchemaVariant::Variant2})
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const GradCheckReport r = random_gradient_check(seed, v);
      CHECK(r.groups.size() == 8);
      CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("frozen providers have no embedding gradient") {
  const CategoryVocab vocab({"A"});
  const ModelShape s = shape_for(TagSchema::standard(), vocab, 3, 10);
  Rng rng(1);
  const Example ex = random_example(rng, s, 3, 0.5);
  const auto r = backward<double>(std::span(&ex, 1), ScorerParams<double>::initialized(s, 2), 1, 1);
  CHECK(r.grad.embedding.size() == 0);
  CHECK(r.loss.total > 0.0);
}

TEST_CASE("untrained model predicts nothing") {
  const CategoryVocab vocab({"A", "B"});
  Sample smp;
  smp.sentence = tokenize("the screen is great", LanguageMode::SpacePunct);
  const HashedFrozen provider(4, 0);
  for (const TagSchema& schema : {TagSchema::standard(), TagSchema::variant2(vocab)}) {
    const auto p = ScorerParams<double>::zeros(shape_for(schema, vocab, 4, 2 * schema.size()));
    CHECK(predict(smp, p, provider, schema, vocab).empty());
  }
}

TEST_CASE("thresholded gold targets decode to the gold quads") {
  // A model whose outputs equal its targets predicts the gold set, for every variant.
  const CategoryVocab vocab(fixtures::category_names());
  Rng rng(21);
  fixtures::GeneratorOptions opt;
  opt.shared_aspect_same_sentiment = true;
  for (int trial = 0; trial < 100; ++trial) {
    const Sample smp = fixtures::random_sample(rng, vocab, opt);
    for (SchemaVariant v : {SchemaVariant::Standard, SchemaVariant::Variant1, SchemaVariant::Variant2}) {
      const TagSchema schema(v, vocab);
      const Targets t = make_targets(encode_sample(smp, schema, vocab));
      ForwardPass<double> f;
      f.h = Eigen::MatrixXd::Zero(smp.sentence.size() + 1, 1);
      f.acd_prob = t.acd;
      f.tag_prob = t.aosc;
      const SampleEncoding enc = threshold_outputs(f, schema, vocab.size(), Thresholds{});
      CHECK(fixtures::sorted(decode_encoding(enc, schema)) == smp.gold);
    }
  }
}
