#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "synforge/data.hpp"
#include "synforge/inference.hpp"
#include "synforge/lang.hpp"
#include "synforge/model.hpp"

namespace synforge {

struct TrainConfig {
  ModelConfig model;
  int dev_beam = 15;
  int batch_size = 10;
  int max_epochs = 500;
  // Evaluations without dev improvement before stopping.
  int patience = 10;
  std::uint64_t seed = 1;
  double lr = 1e-3;
  double clip_norm = 5.0;
  bool closure = false;
  int closure_k = 30;
  int vocab_min_count = 3;
  // Stop as soon as dev exact match reaches this.
  double target_dev_accuracy = 1.0;
  int eval_every = 1;

  // Throws ModelError on an out-of-range setting.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  // Missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
};

// Everything a training run needs after preprocessing: the grammar (with
// closures when enabled), the vocabulary and examples whose oracles follow
// that grammar.
struct Corpus {
  Grammar grammar;
  Vocab vocab;
  std::vector<Example> train;
  std::vector<Example> dev;
};

// Closure counts and vocabulary use the training split only. Throws DataError
// naming the first training example that does not derive under the grammar.
Corpus prepare_corpus(const Grammar& base, std::vector<Example> train, std::vector<Example> dev,
                      const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_nll = 0.0;
  double dev_acc = 0.0;
  double dev_bleu = 0.0;
  double dev_nll = 0.0;
  double lr = 0.0;
  bool evaluated = false;

  nlohmann::ordered_json to_json() const;
};

struct TrainResult {
  Model model;  // best dev snapshot, rounded to float32
  int best_epoch = 0;
  double best_dev_acc = 0.0;
  std::vector<EpochRecord> log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const Corpus& corpus, Language lang, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// One optimizer pass over `batch`; returns the mean per-example loss before
// the update. Exposed for step-level tests.
double train_step(Model& model, nn::Adam& adam, std::span<const std::vector<std::string>> sources,
                  std::span<const std::vector<Action>> actions, const TrainConfig& cfg, std::uint64_t dropout_seed);

// Mean exact match and BLEU-4 of beam decoding over `examples`.
struct DevScore {
  double accuracy = 0.0;
  double bleu = 0.0;
};
DevScore evaluate_model(const Model& model, std::span<const Example> examples, Language lang, int beam);

// Finite-difference check of every parameter group on a three-step example
// (ApplyRule, a vocabulary word also present in the input, close) with a
// small model.
struct GradcheckReport {
  double max_rel_error = 0.0;
  std::vector<std::pair<std::string, double>> per_group;
  std::size_t checked = 0;
};
GradcheckReport gradcheck(std::uint64_t seed, double step = 1e-5);

}  // namespace synforge
