// Mini-batch optimisation with dev-set early stopping.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asqp/checkpoint.hpp"
#include "asqp/data.hpp"
#include "asqp/eval.hpp"
#include "asqp/model.hpp"

namespace asqp {

enum class OptimizerKind { Sgd, Adam };
std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  int epochs_max = 50;
  int batch_size = 32;
  // Unset means 3e-5 for file-backed embeddings and 1e-3 otherwise.
  std::optional<double> learning_rate;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int patience = 4;
  double neg_rate = 0.4;
  double alpha = 1.0;
  double beta = 1.0;
  std::uint64_t seed = 0;
  SchemaVariant schema = SchemaVariant::Standard;
  int hidden = 0;  // 0: kDefaultHidden rounded up to a multiple of the tag count
  Thresholds thresholds;

  void validate() const;  // throws Error
  double resolved_learning_rate(ProviderKind provider) const;
  int resolved_hidden(int n_tags) const;
};

// Flat key-value object; unknown keys are rejected.
nlohmann::json config_to_json(const TrainConfig& c);
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::filesystem::path& path);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double loss_acd = 0.0;
  double loss_aosc = 0.0;
  Metrics dev;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  std::string stop_reason;  // "patience" or "epochs_max"
  int skipped_samples = 0;  // training samples whose quads cannot be encoded losslessly

  // Wall-clock times are ignored.
  bool same_trajectory(const TrainHistory& other) const;
};

// One JSON object per epoch, then a summary line with best_epoch and stop_reason.
void write_history(std::ostream& out, const TrainHistory& h);

struct TrainResult {
  ScorerParams<double> params;  // from best_epoch
  TrainHistory history;
};

// Throws VocabMismatch when the corpora disagree on categories and
// DivergedLoss when the loss or gradient stops being finite.
TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus, const TrainConfig& config,
                  const EmbeddingProvider& provider);

// Predictions for every sample, in corpus order.
std::vector<QuadList> predict_corpus(const ScorerParams<double>& params, const Corpus& corpus,
                                     const EmbeddingProvider& provider, const TagSchema& schema,
                                     const Thresholds& thresholds);

Metrics evaluate(const ScorerParams<double>& params, const Corpus& corpus,
                 const EmbeddingProvider& provider, const TagSchema& schema,
                 const Thresholds& thresholds);

// Throws VocabMismatch when the corpus categories differ from the checkpoint's.
Metrics evaluate_checkpoint(const Checkpoint& checkpoint, const Corpus& corpus,
                            const EmbeddingProvider& provider, const Thresholds& thresholds);

}  // namespace asqp
