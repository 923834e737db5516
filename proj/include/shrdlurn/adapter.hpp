#pragma once

// Online adaptation: a buffer of observed examples and k model copies that
// are selected by buffer loss before each prediction and trained on the
// buffer after each feedback.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "shrdlurn/datagen.hpp"
#include "shrdlurn/nn/model.hpp"
#include "shrdlurn/nn/optim.hpp"

namespace shrdlurn {

/// Which offline weights survive into the online phase.
enum class ReuseScope : std::uint8_t { all, dec, none };
/// Which weights receive gradients online.
enum class AdaptScope : std::uint8_t { newwords, embeddings, encoder, all };
enum class Selection : std::uint8_t { greedy, one_out };

std::string_view reuse_name(ReuseScope r);
std::string_view adapt_name(AdaptScope a);
std::string_view selection_name(Selection s);
ReuseScope parse_reuse(std::string_view s);
AdaptScope parse_adapt(std::string_view s);
Selection parse_selection(std::string_view s);

struct AdaptConfig {
  ReuseScope reuse = ReuseScope::all;
  AdaptScope adapt = AdaptScope::embeddings;
  int k = 7;
  int steps = 100;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  double lr = 1e-2;
  double l2 = 1e-3;
  Selection selection = Selection::greedy;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument for bad values and for scope pairs that
  /// would leave reinitialized weights untrained.
  void validate() const;
  friend bool operator==(const AdaptConfig&, const AdaptConfig&) = default;
};

nlohmann::json adapt_config_to_json(const AdaptConfig& c);
/// Missing keys keep the values of `defaults`.
AdaptConfig adapt_config_from_json(const nlohmann::json& j, AdaptConfig defaults = {});

/// Index of the smallest loss; non-finite losses never win, ties go to the
/// lowest index, an empty list gives 0.
std::size_t argmin_loss(std::span<const double> losses);

struct PredictOutcome {
  std::array<int, kStateLength> tokens{};
  int selected = 0;
  std::vector<double> losses;  // selection loss of every copy
};

struct InteractionRecord {
  Utterance utterance;
  std::array<int, kStateLength> predicted{};
  std::array<int, kStateLength> target{};
  bool correct = false;
  int selected = 0;
  std::vector<double> losses;
};

nlohmann::json record_to_json(const InteractionRecord& r);

class AdaptSession {
 public:
  AdaptSession(const nn::Model<Real>& base, const AdaptConfig& config);

  /// Selects a copy and predicts; does not train. Registers unseen words.
  PredictOutcome predict(const Utterance& utterance, const WorldState& start);
  /// Consumes the feedback for the pending prediction, then trains.
  /// Throws std::logic_error without a pending prediction.
  InteractionRecord feedback(const WorldState& target);
  /// predict followed by feedback.
  InteractionRecord interact(const ExampleTriple& ex);

  bool pending() const { return pending_.has_value(); }
  std::size_t t() const { return log_.size(); }
  double online_accuracy() const;
  const std::vector<InteractionRecord>& log() const { return log_; }
  const std::vector<ExampleTriple>& buffer() const { return buffer_; }
  const AdaptConfig& config() const { return config_; }
  const nn::Model<Real>& model(int i) const { return copies_[static_cast<std::size_t>(i)]; }
  int k() const { return static_cast<int>(copies_.size()); }
  bool quarantined(int i) const { return quarantined_[static_cast<std::size_t>(i)] != 0; }
  /// Selection losses of the most recent prediction (zeros before any).
  const std::vector<double>& latest_losses() const { return latest_losses_; }

  /// Selection losses of every copy on the current buffer.
  std::vector<double> selection_losses() const;
  int select_model() const;

 private:
  void register_words(const Utterance& u);
  void apply_scope(nn::Model<Real>& m) const;
  void train_copies();

  struct Pending {
    Utterance utterance;
    WorldState start;
    PredictOutcome outcome;
  };

  AdaptConfig config_;
  std::vector<nn::Model<Real>> copies_;
  std::vector<std::unique_ptr<nn::Optimizer<Real>>> optimizers_;
  std::vector<Rng> sample_rngs_;
  std::vector<std::uint8_t> quarantined_;
  std::vector<ExampleTriple> buffer_;
  std::vector<nn::EncodedExample> encoded_;
  std::vector<InteractionRecord> log_;
  std::vector<double> latest_losses_;
  std::optional<Pending> pending_;
};

struct SessionResult {
  std::string session_id;
  double accuracy = 0;
  std::vector<InteractionRecord> log;
};

nlohmann::json session_result_to_json(const SessionResult& r, const AdaptConfig& config);

/// Mean of the correctness flags; 0 for an empty log.
double online_accuracy(std::span<const InteractionRecord> log);

SessionResult run_session(const nn::Model<Real>& base, const AdaptConfig& config,
                          const Session& session);

struct OnlineGrid {
  std::vector<nn::OptimizerKind> optimizers{nn::OptimizerKind::adam, nn::OptimizerKind::sgd};
  std::vector<int> steps{100, 200, 500};
  std::vector<double> l2{0.0, 1e-2, 1e-3, 1e-4};
  std::vector<double> lr{1e-1, 1e-2, 1e-3};
  std::vector<Selection> selection{Selection::greedy, Selection::one_out};

  std::size_t size() const {
    return optimizers.size() * steps.size() * l2.size() * lr.size() * selection.size();
  }
};

OnlineGrid online_grid_from_json(const nlohmann::json& j);
/// Grid points in a fixed order; scopes, k and seed come from `base`.
std::vector<AdaptConfig> expand_online_grid(const OnlineGrid& grid, const AdaptConfig& base);

struct TuneRow {
  AdaptConfig config;
  double mean_accuracy = 0;
};

struct TuneResult {
  AdaptConfig best;
  double best_accuracy = -1;
  std::vector<TuneRow> rows;
};

/// Grid search maximizing mean online accuracy over `sessions`; ties keep
/// the earlier grid point.
TuneResult tune_online(const nn::Model<Real>& base, std::span<const Session> sessions,
                       const OnlineGrid& grid, const AdaptConfig& base_config);

}  // namespace shrdlurn
