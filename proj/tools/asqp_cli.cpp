// asqp: command-line front end for the quadruple extraction pipeline.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 internal failure.

#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "asqp/checkpoint.hpp"
#include "asqp/codec.hpp"
#include "asqp/data.hpp"
#include "asqp/eval.hpp"
#include "asqp/gradcheck.hpp"
#include "asqp/train.hpp"

using namespace asqp;
namespace fs = std::filesystem;

namespace {

constexpr double kGradcheckTolerance = 1e-4;

class Timer {
 public:
  explicit Timer(bool enabled) : enabled_(enabled) {}

  template <typename F>
  auto phase(const std::string& name, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    auto report = [&] {
      if (!enabled_) return;
      const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
      std::cerr << "[timing] " << name << ": " << std::fixed << std::setprecision(3) << d.count()
                << " s\n";
    };
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      report();
    } else {
      auto out = f();
      report();
      return out;
    }
  }

 private:
  bool enabled_;
};

struct CommonOptions {
  std::string lang = "en";
  std::string format = "auto";
  bool timing = false;
};

LoadOptions load_options(const CommonOptions& c) {
  LoadOptions o;
  o.language = parse_language(c.lang);
  return o;
}

// JSONL records start with '{'; legacy lines start with sentence text.
std::string detect_format(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path + ": cannot open");
  for (char ch; in.get(ch);)
    if (!std::isspace(static_cast<unsigned char>(ch))) return ch == '{' ? "jsonl" : "legacy";
  return "jsonl";
}

Corpus load_corpus(const std::string& path, const CommonOptions& c, LoadOptions options) {
  std::string format = c.format;
  if (format == "auto") format = detect_format(path);
  if (format == "jsonl") return load_jsonl(path, options);
  if (format == "legacy") return load_legacy(path, options);
  throw Error("unknown format '" + format + "' (expected auto, jsonl or legacy)");
}

// Writes to `path`, or stdout when it is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary);
      if (!file_) throw Error(path + ": cannot open for writing");
    }
  }
  std::ostream& operator*() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

// Non-blank lines with their 1-based line numbers.
std::vector<std::pair<int, std::string>> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path + ": cannot open");
  std::vector<std::pair<int, std::string>> lines;
  int line_no = 0;
  for (std::string line; std::getline(in, line);)
    if (++line_no, line.find_first_not_of(" \t\r") != std::string::npos) lines.emplace_back(line_no, line);
  return lines;
}

nlohmann::json parse_line(const std::string& path, int line_no, const std::string& line) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
  }
}

void add_common(CLI::App* cmd, CommonOptions& c) {
  cmd->add_option("--lang", c.lang, "Tokenization: en (whitespace and punctuation) or zh (per character)")
      ->check(CLI::IsMember({"en", "zh"}));
  cmd->add_option("--format", c.format, "Corpus format")->check(CLI::IsMember({"auto", "jsonl", "legacy"}));
  cmd->add_flag("--timing", c.timing, "Print per-phase wall clock to stderr");
}

// --- stats --------------------------------------------------------------------

struct StatsArgs {
  CommonOptions common;
  std::string input;
  std::string out;
  bool json = false;
};

int run_stats(const StatsArgs& a) {
  Timer timer(a.common.timing);
  LoadOptions options = load_options(a.common);
  options.allow_both_implicit = true;
  const Corpus corpus = timer.phase("load", [&] { return load_corpus(a.input, a.common, options); });
  const StatsReport report = timer.phase("stats", [&] { return compute_stats(corpus); });
  Output out(a.out);
  if (a.json) *out << stats_to_json(report).dump(2) << "\n";
  else *out << format_stats_table(report);
  return 0;
}

// --- encode / decode ------------------------------------------------------------

struct EncodeArgs {
  CommonOptions common;
  std::string input;
  std::string out;
  std::string schema = "standard";
};

int run_encode(const EncodeArgs& a) {
  Timer timer(a.common.timing);
  const Corpus corpus = timer.phase("load", [&] { return load_corpus(a.input, a.common, load_options(a.common)); });
  const TagSchema schema(parse_schema(a.schema), corpus.vocab);
  Output out(a.out);
  timer.phase("encode", [&] {
    nlohmann::json header = {{"categories", corpus.vocab.names()},
                             {"schema", schema_name(schema.variant())},
                             {"lang", language_name(corpus.language)}};
    *out << header.dump() << "\n";
    for (int k = 0; k < corpus.size(); ++k) {
      const Sample& s = corpus.samples[k];
      SampleEncoding enc;
      try {
        enc = encode_sample(s, schema, corpus.vocab);
      } catch (const Error& e) {
        throw Error(a.input + ": sample " + s.id + ": " + e.what());
      }
      const nlohmann::json line = {
          {"id", s.id}, {"text", s.sentence.raw_text}, {"encoding", encoding_to_json(enc, schema, corpus.vocab)}};
      *out << line.dump() << "\n";
    }
  });
  return 0;
}

struct DecodeArgs {
  CommonOptions common;
  std::string input;
  std::string out;
  double cat_threshold = 0.5;
  std::string policy = "all_matching";
};

int run_decode(const DecodeArgs& a) {
  Timer timer(a.common.timing);
  const auto lines = read_lines(a.input);
  if (lines.empty()) throw FormatError(a.input + ": empty file");
  const std::string header_at = a.input + ":" + std::to_string(lines[0].first) + ": ";
  const nlohmann::json header = parse_line(a.input, lines[0].first, lines[0].second);
  if (!header.is_object() || !header.contains("categories") || !header.contains("schema"))
    throw FormatError(header_at + "expected a header with categories and schema");

  Corpus corpus;
  std::vector<QuadList> quads;
  TagSchema schema;
  try {
    corpus.vocab = CategoryVocab(header.at("categories").get<std::vector<std::string>>());
    corpus.language = parse_language(header.value("lang", std::string(language_name(LanguageMode::SpacePunct))));
    schema = TagSchema(parse_schema(header.at("schema").get<std::string>()), corpus.vocab);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(header_at + e.what());
  }
  const AttachPolicy policy = parse_policy(a.policy);
  timer.phase("decode", [&] {
    for (std::size_t k = 1; k < lines.size(); ++k) {
      const int line_no = lines[k].first;
      const nlohmann::json j = parse_line(a.input, line_no, lines[k].second);
      try {
        Sample s;
        s.id = j.at("id").get<std::string>();
        s.sentence = tokenize(j.at("text").get<std::string>(), corpus.language);
        const SampleEncoding enc = encoding_from_json(j.at("encoding"), schema, corpus.vocab);
        if (enc.tag_matrix.n_tokens() != s.sentence.size())
          throw FormatError("encoding covers " + std::to_string(enc.tag_matrix.n_tokens()) +
                            " tokens, text has " + std::to_string(s.sentence.size()));
        quads.push_back(decode_encoding(enc, schema, a.cat_threshold, policy));
        corpus.samples.push_back(std::move(s));
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(a.input + ":" + std::to_string(line_no) + ": " + e.what());
      } catch (const Error& e) {
        throw Error(a.input + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  });
  Output out(a.out);
  for (int k = 0; k < corpus.size(); ++k)
    *out << sample_to_json(corpus.samples[k], corpus.vocab, quads[k]).dump() << "\n";
  return 0;
}

// --- train ----------------------------------------------------------------------

struct TrainArgs {
  CommonOptions common;
  std::string train_path;
  std::string dev_path;
  std::string out = "model.ckpt";
  std::string history;
  std::string config;
  std::string embeddings;
  std::string provider = "trainable";
  int dim = 64;
  std::optional<std::string> schema;
  std::optional<double> neg_rate, alpha, beta, lr, tag_threshold, cat_threshold;
  std::optional<int> epochs, batch_size, patience, hidden;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> optimizer, policy;
};

TrainConfig resolve_config(const TrainArgs& a) {
  TrainConfig c = a.config.empty() ? TrainConfig{} : load_config(a.config);
  if (a.schema) c.schema = parse_schema(*a.schema);
  if (a.neg_rate) c.neg_rate = *a.neg_rate;
  if (a.alpha) c.alpha = *a.alpha;
  if (a.beta) c.beta = *a.beta;
  if (a.lr) c.learning_rate = *a.lr;
  if (a.tag_threshold) c.thresholds.tag = *a.tag_threshold;
  if (a.cat_threshold) c.thresholds.category = *a.cat_threshold;
  if (a.policy) c.thresholds.policy = parse_policy(*a.policy);
  if (a.epochs) c.epochs_max = *a.epochs;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.patience) c.patience = *a.patience;
  if (a.hidden) c.hidden = *a.hidden;
  if (a.seed) c.seed = *a.seed;
  if (a.optimizer) c.optimizer = parse_optimizer(*a.optimizer);
  c.validate();
  return c;
}

int run_train(const TrainArgs& a) {
  Timer timer(a.common.timing);
  const TrainConfig config = resolve_config(a);
  Corpus train_corpus, dev_corpus;
  timer.phase("load", [&] {
    const Corpus full = load_corpus(a.train_path, a.common, load_options(a.common));
    if (a.dev_path.empty()) {
      Corpus test_part;
      std::tie(train_corpus, dev_corpus, test_part) = split(full, {0.7, 0.15, 0.15}, config.seed);
    } else {
      train_corpus = full;
      LoadOptions o = load_options(a.common);
      o.vocab_seed = full.vocab;
      dev_corpus = load_corpus(a.dev_path, a.common, o);
    }
  });

  Checkpoint ck;
  ck.seed = config.seed;
  ck.vocab = train_corpus.vocab;
  std::unique_ptr<EmbeddingProvider> provider;
  if (!a.embeddings.empty()) {
    ck.provider = ProviderKind::FileBacked;
    provider = timer.phase("embeddings", [&] { return std::make_unique<FileBacked>(FileBacked::load(a.embeddings)); });
  } else if (parse_provider(a.provider) == ProviderKind::HashedFrozen) {
    ck.provider = ProviderKind::HashedFrozen;
    ck.provider_seed = config.seed;
    provider = std::make_unique<HashedFrozen>(a.dim, config.seed);
  } else if (parse_provider(a.provider) == ProviderKind::TrainableTable) {
    auto table = std::make_unique<TrainableTable>(TrainableTable::build(train_corpus, a.dim));
    ck.tokens = table->tokens();
    provider = std::move(table);
  } else {
    throw Error("--embeddings selects the file-backed provider");
  }

  const TrainResult result = timer.phase("train", [&] { return train(train_corpus, dev_corpus, config, *provider); });
  ck.params = result.params;
  save_checkpoint(a.out, ck);
  if (!a.history.empty()) {
    std::ofstream h(a.history, std::ios::binary);
    if (!h) throw Error(a.history + ": cannot open for writing");
    write_history(h, result.history);
  }
  const auto& best = result.history.epochs.at(result.history.best_epoch - 1);
  std::cout << "trained " << result.history.epochs.size() << " epochs (" << result.history.stop_reason
            << "), best epoch " << result.history.best_epoch << ", dev F1 " << std::fixed
            << std::setprecision(4) << best.dev.f1 << "\n";
  if (result.history.skipped_samples)
    std::cout << "skipped " << result.history.skipped_samples << " samples that cannot be encoded\n";
  return 0;
}

// --- predict ----------------------------------------------------------------------

struct PredictArgs {
  CommonOptions common;
  std::string checkpoint;
  std::string input;
  std::string out;
  std::string embeddings;
  double tag_threshold = 0.5;
  double cat_threshold = 0.5;
  std::string policy = "all_matching";
};

int run_predict(const PredictArgs& a) {
  Timer timer(a.common.timing);
  const Checkpoint ck = timer.phase("checkpoint", [&] { return load_checkpoint(a.checkpoint); });
  LoadOptions o = load_options(a.common);
  o.vocab_seed = ck.vocab;
  const Corpus corpus = timer.phase("load", [&] { return load_corpus(a.input, a.common, o); });
  if (corpus.vocab.hash() != ck.vocab.hash())
    throw VocabMismatch(a.input + ": introduces categories unknown to the checkpoint");
  const auto provider = ck.make_provider(a.embeddings);
  const Thresholds th{a.tag_threshold, a.cat_threshold, parse_policy(a.policy)};
  const auto pred =
      timer.phase("predict", [&] { return predict_corpus(ck.params, corpus, *provider, ck.schema(), th); });
  Output out(a.out);
  for (int k = 0; k < corpus.size(); ++k)
    *out << sample_to_json(corpus.samples[k], ck.vocab, pred[k]).dump() << "\n";
  return 0;
}

// --- eval -------------------------------------------------------------------------

struct EvalArgs {
  CommonOptions common;
  std::string pred;
  std::string gold;
  std::string out;
  bool json = false;
  int examples = 5;
};

int run_eval(const EvalArgs& a) {
  Timer timer(a.common.timing);
  const Corpus gold = timer.phase("load gold", [&] { return load_corpus(a.gold, a.common, load_options(a.common)); });
  LoadOptions o = load_options(a.common);
  o.vocab_seed = gold.vocab;
  const Corpus pred = timer.phase("load pred", [&] { return load_corpus(a.pred, a.common, o); });
  if (pred.size() != gold.size())
    throw Error(a.pred + " has " + std::to_string(pred.size()) + " samples, " + a.gold + " has " +
                std::to_string(gold.size()));
  std::vector<QuadList> p, g;
  for (int k = 0; k < gold.size(); ++k) {
    if (pred.samples[k].id != gold.samples[k].id)
      throw Error(a.pred + ": sample " + std::to_string(k) + " has id '" + pred.samples[k].id +
                  "', gold has '" + gold.samples[k].id + "'");
    p.push_back(pred.samples[k].gold);
    g.push_back(gold.samples[k].gold);
  }
  const Metrics overall = strict_quad_prf(p, g);
  const BreakdownReport breakdown = breakdown_by_implicitness(p, g);
  const ErrorReport errors = error_analysis(p, g, a.examples);
  Output out(a.out);
  if (a.json) {
    const nlohmann::json j = {{"overall", metrics_to_json(overall)},
                              {"breakdown", breakdown_to_json(breakdown)},
                              {"errors", errors_to_json(errors, &gold)}};
    *out << j.dump(2) << "\n";
  } else {
    *out << format_eval_table(overall, breakdown, errors);
  }
  return 0;
}

// --- gradcheck ----------------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::string schema = "standard";
  bool timing = false;
};

int run_gradcheck(const GradcheckArgs& a) {
  Timer timer(a.timing);
  const GradCheckReport r =
      timer.phase("gradcheck", [&] { return random_gradient_check(a.seed, parse_schema(a.schema)); });
  for (const auto& g : r.groups)
    std::cout << std::left << std::setw(12) << g.name << std::right << std::setw(6) << g.entries
              << "  " << std::scientific << std::setprecision(3) << g.max_rel_error << "\n";
  std::cout << "max relative error " << std::scientific << std::setprecision(3) << r.max_rel_error
            << "\n";
  return r.max_rel_error < kGradcheckTolerance ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aspect-sentiment quadruple extraction"};
  app.require_subcommand(1);

  StatsArgs stats;
  auto* c_stats = app.add_subcommand("stats", "Corpus statistics");
  c_stats->add_option("input", stats.input, "Corpus file")->required();
  c_stats->add_option("-o,--out", stats.out, "Output file (default stdout)");
  c_stats->add_flag("--json", stats.json, "Emit JSON instead of a table");
  add_common(c_stats, stats.common);

  EncodeArgs encode;
  auto* c_encode = app.add_subcommand("encode", "Write the tag-matrix encoding of each sample");
  c_encode->add_option("input", encode.input, "Corpus file")->required();
  c_encode->add_option("-o,--out", encode.out, "Output JSONL (default stdout)");
  c_encode->add_option("--schema", encode.schema)->check(CLI::IsMember({"standard", "variant1", "variant2"}));
  add_common(c_encode, encode.common);

  DecodeArgs decode;
  auto* c_decode = app.add_subcommand("decode", "Decode encodings written by `encode` into quads");
  c_decode->add_option("input", decode.input, "Encodings JSONL")->required();
  c_decode->add_option("-o,--out", decode.out, "Output JSONL (default stdout)");
  c_decode->add_option("--cat-threshold", decode.cat_threshold);
  c_decode->add_option("--policy", decode.policy)->check(CLI::IsMember({"all_matching", "best_one"}));
  add_common(c_decode, decode.common);

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a scorer and write a checkpoint");
  c_train->add_option("train", tr.train_path, "Training corpus")->required();
  c_train->add_option("--dev", tr.dev_path, "Dev corpus (default: 15% split of the training file)");
  c_train->add_option("-o,--out", tr.out, "Checkpoint path");
  c_train->add_option("--history", tr.history, "Per-epoch history JSONL");
  c_train->add_option("--config", tr.config, "JSON training config; flags override it");
  c_train->add_option("--embeddings", tr.embeddings, "Embedding file (selects the file-backed provider)");
  c_train->add_option("--provider", tr.provider)->check(CLI::IsMember({"trainable", "hashed"}));
  c_train->add_option("--dim", tr.dim, "Embedding width for trainable and hashed providers")->check(CLI::PositiveNumber);
  c_train->add_option("--schema", tr.schema)->check(CLI::IsMember({"standard", "variant1", "variant2"}));
  c_train->add_option("--neg-rate", tr.neg_rate);
  c_train->add_option("--alpha", tr.alpha);
  c_train->add_option("--beta", tr.beta);
  c_train->add_option("--lr", tr.lr);
  c_train->add_option("--optimizer", tr.optimizer)->check(CLI::IsMember({"adam", "sgd"}));
  c_train->add_option("--epochs", tr.epochs);
  c_train->add_option("--batch-size", tr.batch_size);
  c_train->add_option("--patience", tr.patience);
  c_train->add_option("--hidden", tr.hidden);
  c_train->add_option("--seed", tr.seed);
  c_train->add_option("--tag-threshold", tr.tag_threshold);
  c_train->add_option("--cat-threshold", tr.cat_threshold);
  c_train->add_option("--policy", tr.policy)->check(CLI::IsMember({"all_matching", "best_one"}));
  add_common(c_train, tr.common);

  PredictArgs pr;
  auto* c_predict = app.add_subcommand("predict", "Predict quads with a trained checkpoint");
  c_predict->add_option("--checkpoint", pr.checkpoint)->required();
  c_predict->add_option("input", pr.input, "Corpus to label")->required();
  c_predict->add_option("-o,--out", pr.out, "Output JSONL (default stdout)");
  c_predict->add_option("--embeddings", pr.embeddings);
  c_predict->add_option("--tag-threshold", pr.tag_threshold);
  c_predict->add_option("--cat-threshold", pr.cat_threshold);
  c_predict->add_option("--policy", pr.policy)->check(CLI::IsMember({"all_matching", "best_one"}));
  add_common(c_predict, pr.common);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Score predictions against gold");
  c_eval->add_option("--pred", ev.pred)->required();
  c_eval->add_option("--gold", ev.gold)->required();
  c_eval->add_option("-o,--out", ev.out, "Report file (default stdout)");
  c_eval->add_option("--examples", ev.examples, "Exemplars kept per error type")->check(CLI::NonNegativeNumber);
  c_eval->add_flag("--json", ev.json);
  add_common(c_eval, ev.common);

  GradcheckArgs gc;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients");
  c_grad->add_option("--seed", gc.seed);
  c_grad->add_option("--schema", gc.schema)->check(CLI::IsMember({"standard", "variant1", "variant2"}));
  c_grad->add_flag("--timing", gc.timing);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_stats) return run_stats(stats);
    if (*c_encode) return run_encode(encode);
    if (*c_decode) return run_decode(decode);
    if (*c_train) return run_train(tr);
    if (*c_predict) return run_predict(pr);
    if (*c_eval) return run_eval(ev);
    if (*c_grad) return run_gradcheck(gc);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
