#pragma once

// Benchmarks over online sessions: session files, word recovery, the
// reuse x adapt matrix on recorded (or synthetic dialect) sessions, the
// scrambled-grammar control and embedding similarity analysis.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "shrdlurn/adapter.hpp"
#include "shrdlurn/datagen.hpp"
#include "shrdlurn/nn/model.hpp"

namespace shrdlurn {

// Session files hold one JSON object per line, or a single JSON array of
// the same objects:
//   {"id": "...", "accuracy": 0.4, "examples": [{"utt": [...],
//    "start": [23 tokens], "target": [23 tokens]}, ...]}
// "utt" may also be a whitespace-separated string; "accuracy" (an external
// per-session score) and "corruption" are optional.

struct IngestReport {
  std::vector<Session> sessions;
  std::size_t examples = 0;
  std::vector<std::string> skipped;  // one message per rejected session
};

/// Throws FormatError with the line number for malformed JSON or missing
/// fields. Sessions with invalid states or empty utterances are skipped.
IngestReport read_sessions(std::istream& in);
IngestReport ingest_sessions(const std::string& path);
void write_sessions(std::ostream& out, std::span<const Session> sessions);
void save_sessions(const std::string& path, std::span<const Session> sessions);

nlohmann::json session_to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);

/// Replays every session with the same config; sessions run on up to
/// `threads` workers (0 = hardware concurrency). Output order is input order.
std::vector<SessionResult> replay_sessions(const nn::Model<Real>& base, const AdaptConfig& config,
                                           std::span<const Session> sessions,
                                           unsigned threads = 0);

/// Sample Pearson correlation. Throws std::invalid_argument for unequal
/// lengths, fewer than two points or a constant input.
double pearson(std::span<const double> xs, std::span<const double> ys);

struct Variant {
  std::string name;
  AdaptConfig config;
};

/// The four word-recovery models: embeddings on the full network (k=7),
/// encoder relearned under a reused decoder, everything from scratch, and
/// the first with a single copy.
std::vector<Variant> recovery_variants();

struct RecoveryOptions {
  std::vector<RecoveryCondition> conditions{kRecoveryConditions.begin(),
                                            kRecoveryConditions.end()};
  std::size_t max_sessions = 0;  // per condition; 0 keeps all
  std::uint64_t seed = 7;        // session construction
  unsigned threads = 0;
};

struct RecoveryCell {
  std::string variant;
  RecoveryCondition condition{};
  double mean = 0;
  std::vector<std::string> session_ids;
  std::vector<double> accuracies;
};

struct RecoveryReport {
  std::vector<Variant> variants;
  std::vector<RecoveryCell> cells;  // variant-major

  const RecoveryCell& cell(const std::string& variant, RecoveryCondition c) const;
};

inline constexpr int kTuningEnsemble = 7;

/// Tunes each variant's online hyperparameters on the validation recovery
/// session with k = kTuningEnsemble; scopes, k and seed are kept.
std::vector<Variant> tune_recovery_variants(const nn::Model<Real>& base, const SplitSpec& split,
                                            std::vector<Variant> variants, const OnlineGrid& grid,
                                            std::uint64_t seed = 7);

RecoveryReport run_recovery_benchmark(const nn::Model<Real>& base, const SplitSpec& split,
                                      std::span<const Variant> variants,
                                      const RecoveryOptions& options = {});
nlohmann::json recovery_report_to_json(const RecoveryReport& r);
std::string recovery_table(const RecoveryReport& r);

/// The six reuse x adapt regimes that train every reinitialized component.
std::vector<Variant> human_variants();

struct MatrixCell {
  Variant variant;
  double mean = 0;
  std::optional<double> r;  // against external accuracies, when all present
  std::vector<std::string> session_ids;
  std::vector<double> accuracies;
};

struct ResultsMatrix {
  std::vector<MatrixCell> cells;
  std::size_t validation_sessions = 0;
};

struct HumanOptions {
  std::size_t validation_sessions = 3;  // the leading sessions tune each cell
  OnlineGrid grid;
  bool tune = true;
  unsigned threads = 0;
};

/// Tunes each variant on the first sessions and evaluates on the rest.
ResultsMatrix run_human_benchmark(const nn::Model<Real>& base, std::span<const Session> sessions,
                                  std::span<const Variant> variants,
                                  const HumanOptions& options = {});
nlohmann::json results_matrix_to_json(const ResultsMatrix& m);
std::string results_table(const ResultsMatrix& m);

/// Mean online accuracy of a scrambled-grammar checkpoint under
/// reuse=dec, adapt=encoder (or `config` when given).
double run_scramble_control(const nn::Model<Real>& scrambled, std::span<const Session> sessions,
                            std::optional<AdaptConfig> config = std::nullopt,
                            unsigned threads = 0);

/// Word embeddings of a model: offline words first.
struct EmbeddingTable {
  std::vector<std::string> words;
  std::size_t base_size = 0;
  std::vector<std::vector<double>> vectors;
};

EmbeddingTable embedding_table(const nn::Model<Real>& model);
nlohmann::json embedding_table_to_json(const EmbeddingTable& t);
EmbeddingTable embedding_table_from_json(const nlohmann::json& j);

struct SimilarityRow {
  std::string probe;
  std::vector<std::pair<std::string, double>> ranked;  // descending cosine
};

/// Cosine of each probe to every offline word. Throws std::invalid_argument
/// for a probe outside the table.
std::vector<SimilarityRow> embedding_similarity_report(const EmbeddingTable& table,
                                                       std::span<const std::string> probes);
std::string similarity_table(std::span<const SimilarityRow> rows, std::size_t top = 5);

}  // namespace shrdlurn
