#include "asqp/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include "asqp/codec.hpp"

namespace asqp {

using nlohmann::json;

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw Error("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  if (epochs_max < 1) throw Error("epochs_max must be at least 1");
  if (batch_size < 1) throw Error("batch_size must be at least 1");
  if (patience < 1) throw Error("patience must be at least 1");
  if (!(neg_rate >= 0.0 && neg_rate <= 1.0)) throw Error("neg_rate must lie in [0, 1]");
  if (learning_rate && !(*learning_rate > 0.0 && std::isfinite(*learning_rate)))
    throw Error("learning_rate must be positive");
  if (!std::isfinite(alpha) || !std::isfinite(beta) || alpha < 0.0 || beta < 0.0)
    throw Error("alpha and beta must be finite and non-negative");
  if (hidden < 0) throw Error("hidden must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 &&
        adam_epsilon > 0.0))
    throw Error("Adam moments must lie in [0, 1) and epsilon must be positive");
}

double TrainConfig::resolved_learning_rate(ProviderKind provider) const {
  if (learning_rate) return *learning_rate;
  return provider == ProviderKind::FileBacked ? 3e-5 : 1e-3;
}

int TrainConfig::resolved_hidden(int n_tags) const {
  return hidden > 0 ? hidden : compatible_hidden(kDefaultHidden, n_tags);
}

json config_to_json(const TrainConfig& c) {
  json j = {{"epochs_max", c.epochs_max},
            {"batch_size", c.batch_size},
            {"optimizer", std::string(optimizer_name(c.optimizer))},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_epsilon", c.adam_epsilon},
            {"patience", c.patience},
            {"neg_rate", c.neg_rate},
            {"alpha", c.alpha},
            {"beta", c.beta},
            {"seed", c.seed},
            {"schema", std::string(schema_name(c.schema))},
            {"hidden", c.hidden},
            {"tag_threshold", c.thresholds.tag},
            {"cat_threshold", c.thresholds.category},
            {"policy", std::string(policy_name(c.thresholds.policy))}};
  j["learning_rate"] = c.learning_rate ? json(*c.learning_rate) : json(nullptr);
  return j;
}

TrainConfig config_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("training config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "epochs_max") c.epochs_max = v.get<int>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "learning_rate") c.learning_rate = v.is_null() ? std::nullopt : std::optional(v.get<double>());
      else if (key == "optimizer") c.optimizer = parse_optimizer(v.get<std::string>());
      else if (key == "adam_beta1") c.adam_beta1 = v.get<double>();
      else if (key == "adam_beta2") c.adam_beta2 = v.get<double>();
      else if (key == "adam_epsilon") c.adam_epsilon = v.get<double>();
      else if (key == "patience") c.patience = v.get<int>();
      else if (key == "neg_rate") c.neg_rate = v.get<double>();
      else if (key == "alpha") c.alpha = v.get<double>();
      else if (key == "beta") c.beta = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "schema") c.schema = parse_schema(v.get<std::string>());
      else if (key == "hidden") c.hidden = v.get<int>();
      else if (key == "tag_threshold") c.thresholds.tag = v.get<double>();
      else if (key == "cat_threshold") c.thresholds.category = v.get<double>();
      else if (key == "policy") c.thresholds.policy = parse_policy(v.get<std::string>());
      else throw FormatError("unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw FormatError("config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const Error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

bool TrainHistory::same_trajectory(const TrainHistory& other) const {
  if (best_epoch != other.best_epoch || stop_reason != other.stop_reason ||
      skipped_samples != other.skipped_samples || epochs.size() != other.epochs.size())
    return false;
  for (std::size_t k = 0; k < epochs.size(); ++k) {
    const auto& a = epochs[k];
    const auto& b = other.epochs[k];
    if (a.epoch != b.epoch || a.loss != b.loss || a.loss_acd != b.loss_acd ||
        a.loss_aosc != b.loss_aosc || !(a.dev == b.dev))
      return false;
  }
  return true;
}

void write_history(std::ostream& out, const TrainHistory& h) {
  for (const auto& e : h.epochs) {
    json j = {{"epoch", e.epoch},       {"loss", e.loss},         {"loss_acd", e.loss_acd},
              {"loss_aosc", e.loss_aosc}, {"dev", metrics_to_json(e.dev)}, {"seconds", e.seconds}};
    out << j.dump() << '\n';
  }
  out << json{{"best_epoch", h.best_epoch},
              {"stop_reason", h.stop_reason},
              {"skipped_samples", h.skipped_samples}}
             .dump()
      << '\n';
}

namespace {

struct Adam {
  ScorerParams<double> m, v;
  long step = 0;
};

std::vector<Eigen::MatrixXd*> groups(ScorerParams<double>& p) {
  std::vector<Eigen::MatrixXd*> out;
  p.for_each([&](const char*, Eigen::MatrixXd& m) { out.push_back(&m); });
  return out;
}

void apply_update(ScorerParams<double>& params, ScorerParams<double>& grad, Adam* adam,
                  const TrainConfig& c, double lr) {
  auto p = groups(params);
  auto g = groups(grad);
  if (!adam) {
    for (std::size_t k = 0; k < p.size(); ++k) *p[k] -= lr * *g[k];
    return;
  }
  ++adam->step;
  auto m = groups(adam->m);
  auto v = groups(adam->v);
  const double c1 = 1.0 - std::pow(c.adam_beta1, static_cast<double>(adam->step));
  const double c2 = 1.0 - std::pow(c.adam_beta2, static_cast<double>(adam->step));
  for (std::size_t k = 0; k < p.size(); ++k) {
    *m[k] = c.adam_beta1 * *m[k] + (1.0 - c.adam_beta1) * *g[k];
    *v[k] = c.adam_beta2 * *v[k] + (1.0 - c.adam_beta2) * g[k]->cwiseAbs2();
    const Eigen::ArrayXXd m_hat = m[k]->array() / c1;
    const Eigen::ArrayXXd v_hat = v[k]->array() / c2;
    p[k]->array() -= lr * m_hat / (v_hat.sqrt() + c.adam_epsilon);
  }
}

}  // namespace

std::vector<QuadList> predict_corpus(const ScorerParams<double>& params, const Corpus& corpus,
                                     const EmbeddingProvider& provider, const TagSchema& schema,
                                     const Thresholds& thresholds) {
  std::vector<QuadList> out;
  out.reserve(corpus.samples.size());
  for (const auto& s : corpus.samples)
    out.push_back(predict(s, params, provider, schema, corpus.vocab, thresholds));
  return out;
}

Metrics evaluate(const ScorerParams<double>& params, const Corpus& corpus,
                 const EmbeddingProvider& provider, const TagSchema& schema,
                 const Thresholds& thresholds) {
  std::vector<QuadList> gold;
  gold.reserve(corpus.samples.size());
  for (const auto& s : corpus.samples) gold.push_back(s.gold);
  return strict_quad_prf(predict_corpus(params, corpus, provider, schema, thresholds), gold);
}

Metrics evaluate_checkpoint(const Checkpoint& checkpoint, const Corpus& corpus,
                            const EmbeddingProvider& provider, const Thresholds& thresholds) {
  if (checkpoint.vocab.hash() != corpus.vocab.hash())
    throw VocabMismatch("corpus categories differ from the checkpoint's");
  return evaluate(checkpoint.params, corpus, provider, checkpoint.schema(), thresholds);
}

TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus, const TrainConfig& config,
                  const EmbeddingProvider& provider) {
  using Clock = std::chrono::steady_clock;
  config.validate();
  if (!(train_corpus.vocab == dev_corpus.vocab))
    throw VocabMismatch("training and dev corpora use different category vocabularies");
  const CategoryVocab& vocab = train_corpus.vocab;
  const TagSchema schema(config.schema, vocab);
  const auto* table = dynamic_cast<const TrainableTable*>(&provider);
  const ModelShape shape = ModelShape::make(schema, vocab, provider.dim(),
                                            config.resolved_hidden(schema.size()),
                                            table ? table->rows() : 0);
  const double lr = config.resolved_learning_rate(provider.kind());

  TrainResult result;
  TrainHistory& history = result.history;
  std::vector<Example> examples;
  for (const auto& s : train_corpus.samples) {
    Example ex;
    try {
      ex.targets = make_targets(encode_sample(s, schema, vocab));
    } catch (const ConflictingEncoding&) {
      ++history.skipped_samples;
      continue;
    }
    ex.input = provider.prepare(s);
    examples.push_back(std::move(ex));
  }
  if (examples.empty()) throw Error("no trainable samples in the training corpus");

  ScorerParams<double> params = ScorerParams<double>::initialized(shape, config.seed);
  std::optional<Adam> adam;
  if (config.optimizer == OptimizerKind::Adam)
    adam = Adam{ScorerParams<double>::zeros(shape), ScorerParams<double>::zeros(shape), 0};

  double best_f1 = -1.0;
  result.params = params;
  history.stop_reason = "epochs_max";
  std::vector<std::size_t> order(examples.size());
  for (int epoch = 1; epoch <= config.epochs_max; ++epoch) {
    const auto t0 = Clock::now();
    for (std::size_t k = 0; k < examples.size(); ++k)
      examples[k].mask = sample_negatives(examples[k].targets, config.neg_rate,
                                          mix_seed(config.seed, static_cast<std::uint64_t>(epoch), k));
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng order_rng(mix_seed(config.seed, 0x0de5, static_cast<std::uint64_t>(epoch)));
    shuffle(order, order_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    std::vector<Example> batch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      for (std::size_t k = start; k < stop; ++k) batch.push_back(examples[order[k]]);
      GradientResult<double> g;
      try {
        g = backward<double>(batch, params, config.alpha, config.beta);
      } catch (const NonFiniteLoss& e) {
        throw DivergedLoss("epoch " + std::to_string(epoch) + ": " + e.what());
      } catch (const NonFiniteGradient& e) {
        throw DivergedLoss("epoch " + std::to_string(epoch) + ": " + e.what());
      }
      const double w = static_cast<double>(batch.size()) / static_cast<double>(examples.size());
      rec.loss += w * g.loss.total;
      rec.loss_acd += w * g.loss.acd;
      rec.loss_aosc += w * g.loss.aosc;
      apply_update(params, g.grad, adam ? &*adam : nullptr, config, lr);
      if (!params.all_finite())
        throw DivergedLoss("epoch " + std::to_string(epoch) + ": parameters became non-finite");
    }

    rec.dev = evaluate(params, dev_corpus, provider, schema, config.thresholds);
    rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    history.epochs.push_back(rec);
    if (rec.dev.f1 > best_f1) {
      best_f1 = rec.dev.f1;
      history.best_epoch = epoch;
      result.params = params;
    } else if (epoch - history.best_epoch >= config.patience) {
      history.stop_reason = "patience";
      break;
    }
  }
  return result;
}

}  // namespace asqp
