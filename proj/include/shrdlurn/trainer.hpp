#pragma once

// Offline supervised training with model selection on validation
// exact-match accuracy, evaluation and grid sweeps.

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "shrdlurn/datagen.hpp"
#include "shrdlurn/nn/model.hpp"
#include "shrdlurn/nn/optim.hpp"

namespace shrdlurn {

class LeakageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the training loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  nn::ModelConfig model;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  double lr = 1e-3;
  int batch = 64;
  int max_epochs = 100;
  int patience = 10;    // evaluations without improvement
  int eval_every = 500;  // steps; 0 evaluates after every epoch
  std::uint64_t seed = 1;
  std::size_t train_limit = 0;  // 0 uses every training example
  std::size_t val_limit = 0;
  double time_budget_s = 0;  // 0 means unlimited
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EvalReport {
  double exact_match = 0;
  double token_accuracy = 0;
  std::size_t n = 0;
};

struct CurvePoint {
  long step = 0;
  int epoch = 0;
  double train_loss = 0;  // mean over the steps since the previous point
  double val_exact = 0;
  double val_token = 0;
};

struct TrainResult {
  nn::Model<Real> model;  // best validation checkpoint
  std::vector<CurvePoint> curve;
  double best_val = 0;
  long best_step = 0;
  long steps = 0;
  double seconds = 0;
};

/// Offline vocabulary: training words in first-seen order, then any grammar
/// word the training data never uses.
nn::Vocabulary build_vocabulary(const Dataset& train);

/// Throws LeakageError when `other` shares an utterance or a start column
/// with `train`.
void audit_splits(const Dataset& train, const Dataset& other);

EvalReport score(std::span<const nn::Prediction> predictions, std::span<const ExampleTriple> gold);
template <typename T>
EvalReport evaluate(const nn::Model<T>& model, const Dataset& ds);

using CurveCallback = std::function<void(const CurvePoint&)>;

/// Trains from scratch; returns the checkpoint with the best validation
/// exact match, stopping after `patience` evaluations without improvement.
TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set,
                  const CurveCallback& on_eval = {});

struct SweepGrid {
  std::vector<std::string> archs{"seq2seq", "seq2conv", "conv2seq", "conv2conv", "bow2seq"};
  std::vector<int> lstm_layers{1, 2};
  std::vector<int> conv_layers{4, 5};
  std::vector<int> hidden{32, 64, 128, 256};
  std::vector<double> dropout{0.0, 0.2, 0.5};
  std::vector<std::uint64_t> seeds{1};
  TrainConfig base;
};

SweepGrid sweep_grid_from_json(const nlohmann::json& j);
/// Distinct configurations in a fixed order. Layer counts only vary for the
/// component kinds an architecture uses.
std::vector<TrainConfig> expand_grid(const SweepGrid& grid);

struct SweepRow {
  TrainConfig config;
  double val_exact = 0;
  double val_token = 0;
  long best_step = 0;
  double seconds = 0;
};

struct SweepResult {
  std::vector<SweepRow> leaderboard;  // evaluation order
  std::vector<SweepRow> best_per_arch;  // sorted by accuracy, descending
};

/// Runs at most `budget` configurations (0 = all) in expand_grid order and
/// appends one JSON line per configuration to `ledger` when given.
SweepResult sweep(const SweepGrid& grid, std::size_t budget, const Dataset& train_set,
                  const Dataset& val_set, std::ostream* ledger = nullptr);

nlohmann::json sweep_row_to_json(const SweepRow& r);

}  // namespace shrdlurn
