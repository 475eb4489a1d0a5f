#include <doctest.h>

#include <sstream>

#include "asqp/train.hpp"
#include "fixtures.hpp"

using namespace asqp;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.epochs_max = 6;
  c.batch_size = 4;
  c.hidden = 10;
  c.seed = 3;
  return c;
}

bool same_groups(const ScorerParams<double>& a, const ScorerParams<double>& b,
                 std::initializer_list<int> groups) {
  std::vector<const Eigen::MatrixXd*> ga, gb;
  a.for_each([&](const char*, const Eigen::MatrixXd& m) { ga.push_back(&m); });
  b.for_each([&](const char*, const Eigen::MatrixXd& m) { gb.push_back(&m); });
  for (int g : groups)
    if (!(*ga[g] == *gb[g])) return false;
  return true;
}

constexpr std::initializer_list<int> kAcdGroups = {0, 1, 2};
constexpr std::initializer_list<int> kAoscGroups = {3, 4, 5, 6};

}  // namespace

TEST_CASE("config validation and json") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.resolved_learning_rate(ProviderKind::FileBacked) == 3e-5);
  CHECK(c.resolved_learning_rate(ProviderKind::TrainableTable) == 1e-3);
  CHECK(c.resolved_hidden(5) == 400);
  CHECK(c.resolved_hidden(11) == 407);
  c.patience = 0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.neg_rate = 1.5;
  CHECK_THROWS(c.validate());

  TrainConfig d;
  d.learning_rate = 0.01;
  d.optimizer = OptimizerKind::Sgd;
  d.schema = SchemaVariant::Variant2;
  d.thresholds.policy = AttachPolicy::BestOne;
  d.seed = 12345678901234ULL;
  const TrainConfig e = config_from_json(config_to_json(d));
  CHECK(config_to_json(e) == config_to_json(d));
  CHECK(e.learning_rate == 0.01);
  CHECK_THROWS_AS(config_from_json({{"epochs", 3}}), FormatError);
  CHECK_THROWS_AS(config_from_json({{"patience", "four"}}), FormatError);
}

TEST_CASE("training is deterministic") {
  const Corpus c = fixtures::overfit_corpus(2, 10);
  const TrainableTable table = TrainableTable::build(c, 8);
  const TrainResult a = train(c, c, small_config(), table);
  const TrainResult b = train(c, c, small_config(), table);
  CHECK(a.history.same_trajectory(b.history));
  CHECK(a.params == b.params);
  TrainConfig other = small_config();
  other.seed = 4;
  CHECK_FALSE(train(c, c, other, table).params == a.params);
}

TEST_CASE("zero loss weights freeze their head") {
  const Corpus c = fixtures::overfit_corpus(5, 10);
  const TrainableTable table = TrainableTable::build(c, 8);
  TrainConfig cfg = small_config();
  cfg.epochs_max = 3;
  cfg.patience = 10;
  const ModelShape shape = ModelShape::make(TagSchema::standard(), c.vocab, 8, 10, table.rows());
  const auto init = ScorerParams<double>::initialized(shape, cfg.seed);
  for (OptimizerKind opt : {OptimizerKind::Adam, OptimizerKind::Sgd}) {
    cfg.optimizer = opt;
    cfg.alpha = 1.0;
    cfg.beta = 0.0;
    const TrainResult acd_only = train(c, c, cfg, table);
    CHECK(same_groups(acd_only.params, init, kAoscGroups));
    CHECK_FALSE(same_groups(acd_only.params, init, kAcdGroups));
    cfg.alpha = 0.0;
    cfg.beta = 1.0;
    const TrainResult aosc_only = train(c, c, cfg, table);
    CHECK(same_groups(aosc_only.params, init, kAcdGroups));
    CHECK_FALSE(same_groups(aosc_only.params, init, kAoscGroups));
  }
}

TEST_CASE("early stopping") {
  const Corpus c = fixtures::overfit_corpus(6, 8);
  const TrainableTable table = TrainableTable::build(c, 8);
  TrainConfig cfg = small_config();
  cfg.epochs_max = 40;
  cfg.learning_rate = 1e-5;
  cfg.patience = 2;
  const TrainResult r = train(c, c, cfg, table);
  const auto& h = r.history;
  REQUIRE_FALSE(h.epochs.empty());
  double best = -1.0;
  int best_epoch = 0;
  for (const auto& e : h.epochs)
    if (e.dev.f1 > best) {
      best = e.dev.f1;
      best_epoch = e.epoch;
    }
  CHECK(h.best_epoch == best_epoch);
  CHECK(h.epochs.back().epoch - h.best_epoch <= cfg.patience);
  if (h.stop_reason == "patience") CHECK(h.epochs.back().epoch - h.best_epoch == cfg.patience);
  CHECK(static_cast<int>(h.epochs.size()) < cfg.epochs_max);

  std::ostringstream out;
  write_history(out, h);
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (++lines <= static_cast<int>(h.epochs.size())) CHECK(j.contains("dev"));
    else CHECK(j.at("best_epoch") == h.best_epoch);
  }
  CHECK(lines == static_cast<int>(h.epochs.size()) + 1);
}

TEST_CASE("full sampling rate matches the unmasked loss") {
  const Corpus c = fixtures::overfit_corpus(7, 6);
  const TrainableTable table = TrainableTable::build(c, 8);
  TrainConfig cfg = small_config();
  cfg.epochs_max = 1;
  cfg.batch_size = 100;
  cfg.neg_rate = 1.0;
  const TrainResult r = train(c, c, cfg, table);

  // Independent recomputation at the initial parameters: every entry except
  // the never-supervised category row of the sentinel counts.
  const TagSchema schema = TagSchema::standard();
  const auto init = ScorerParams<double>::initialized(
      ModelShape::make(schema, c.vocab, 8, 10, table.rows()), cfg.seed);
  double acd = 0.0, aosc = 0.0;
  for (const auto& s : c.samples) {
    const Targets t = make_targets(encode_sample(s, schema, c.vocab));
    const auto f = forward(table.prepare(s), init);
    double sa = 0.0, so = 0.0;
    long na = 0, no = 0;
    for (Eigen::Index r = 1; r < t.acd.rows(); ++r)
      for (Eigen::Index k = 0; k < t.acd.cols(); ++k, ++na) sa += detail::bce(f.acd_prob(r, k), t.acd(r, k));
    for (int tag = 0; tag < schema.size(); ++tag)
      for (Eigen::Index i = 0; i < t.aosc[tag].rows(); ++i)
        for (Eigen::Index j = 0; j < t.aosc[tag].cols(); ++j, ++no)
          so += detail::bce(f.tag_prob[tag](i, j), t.aosc[tag](i, j));
    acd += sa / na / c.size();
    aosc += so / no / c.size();
  }
  CHECK(r.history.epochs[0].loss_acd == doctest::Approx(acd).epsilon(1e-12));
  CHECK(r.history.epochs[0].loss_aosc == doctest::Approx(aosc).epsilon(1e-12));
}

TEST_CASE("untrained parameters score zero") {
  const Corpus c = fixtures::overfit_corpus(8, 5);
  const TagSchema schema = TagSchema::standard();
  const HashedFrozen provider(6, 1);
  const auto zero = ScorerParams<double>::zeros(ModelShape::make(schema, c.vocab, 6, 10, 0));
  const Metrics m = evaluate(zero, c, provider, schema, Thresholds{});
  CHECK(m.n_pred == 0);
  CHECK(m.precision == 0.0);
  CHECK(m.f1 == 0.0);
}

TEST_CASE("training rejects mismatched vocabularies and diverging runs") {
  const Corpus c = fixtures::overfit_corpus(9, 5);
  Corpus dev = c;
  dev.vocab = CategoryVocab({"x"});
  const TrainableTable table = TrainableTable::build(c, 8);
  CHECK_THROWS_AS(train(c, dev, small_config(), table), VocabMismatch);

  TrainConfig wild = small_config();
  wild.optimizer = OptimizerKind::Sgd;
  wild.learning_rate = 1e300;
  CHECK_THROWS_AS(train(c, c, wild, table), DivergedLoss);
}

TEST_CASE("small corpus overfits") {
  const Corpus c = fixtures::overfit_corpus(10, 12);
  const TrainableTable table = TrainableTable::build(c, 16);
  TrainConfig cfg;
  cfg.epochs_max = 150;
  cfg.patience = 150;
  cfg.batch_size = 4;
  cfg.hidden = 40;
  cfg.learning_rate = 1e-2;
  const TrainResult r = train(c, c, cfg, table);
  CHECK(r.history.epochs.at(r.history.best_epoch - 1).dev.f1 == 1.0);
  CHECK(evaluate(r.params, c, table, TagSchema::standard(), cfg.thresholds).f1 == 1.0);
}
