#pragma once

// Synthetic data for offline training and the controlled online
// experiments: compositional splits, example generation, word corruption
// and language scrambling.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shrdlurn/blockworld.hpp"
#include "shrdlurn/rng.hpp"

namespace shrdlurn {

enum class Split : std::uint8_t { train, val, test };
inline constexpr std::array<Split, 3> kSplits{Split::train, Split::val, Split::test};
std::string_view split_name(Split s);

/// Partition of the 88 instructions and 85 columns into train/val/test.
struct SplitSpec {
  std::array<std::vector<Instruction>, 3> utterances;
  std::array<std::vector<Pile>, 3> columns;
  std::uint64_t seed = 0;

  const std::vector<Instruction>& utterances_of(Split s) const {
    return utterances[static_cast<std::size_t>(s)];
  }
  const std::vector<Pile>& columns_of(Split s) const {
    return columns[static_cast<std::size_t>(s)];
  }
};

struct ExampleTriple {
  Utterance utterance;
  WorldState start;
  WorldState target;
  friend bool operator==(const ExampleTriple&, const ExampleTriple&) = default;
};

struct Dataset {
  std::vector<ExampleTriple> examples;
  std::string tag;
};

struct DatasetCounts {
  std::size_t train = 42000;
  std::size_t val = 4000;
  std::size_t test = 4000;
};

/// Injective word -> replacement map whose images lie outside the grammar.
class CorruptionMap {
 public:
  CorruptionMap() = default;
  /// Throws std::invalid_argument when not injective or when a replacement
  /// is itself a grammar word.
  explicit CorruptionMap(std::map<std::string, std::string> mapping);

  const std::map<std::string, std::string>& mapping() const { return mapping_; }
  bool empty() const { return mapping_.empty(); }
  std::size_t size() const { return mapping_.size(); }

  Utterance apply(const Utterance& u) const;
  Utterance invert(const Utterance& u) const;

 private:
  std::map<std::string, std::string> mapping_;
};

/// The fixed nonce spelling used when corrupting a grammar word.
std::string corrupted_spelling(const std::string& word);
CorruptionMap corruption_for(const std::vector<std::string>& words);

/// A stream of interactions from one (simulated or recorded) speaker.
struct Session {
  std::string id;
  std::vector<ExampleTriple> examples;
  std::optional<double> external_accuracy;
  CorruptionMap corruption;
};

enum class RecoveryCondition : std::uint8_t { one, two, three, all };
inline constexpr std::array<RecoveryCondition, 4> kRecoveryConditions{
    RecoveryCondition::one, RecoveryCondition::two, RecoveryCondition::three,
    RecoveryCondition::all};
std::string_view condition_name(RecoveryCondition c);
/// Session counts per condition: 7, 17, 10, 1.
std::size_t condition_session_count(RecoveryCondition c);

enum class WordType : std::uint8_t { verb, color, position };

/// Words corrupted in the validation recovery session.
const std::vector<std::string>& validation_corruption_vocabulary();
/// Verb/color/position words not in the validation vocabulary.
std::vector<std::string> test_corruption_vocabulary();
std::optional<WordType> word_type(const std::string& word);

SplitSpec make_split(std::uint64_t seed);

/// Six columns drawn uniformly with replacement from `pool`.
WorldState sample_state(std::span<const Pile> pool, Rng& rng);

/// Per-example RNG streams: output is independent of generation order.
ExampleTriple generate_example(const SplitSpec& split, Split part, std::size_t index);
std::array<Dataset, 3> generate(const SplitSpec& split, const DatasetCounts& counts = {});
Dataset generate_split(const SplitSpec& split, Split part, std::size_t count);

Dataset corrupt(const Dataset& ds, const CorruptionMap& map);
Session corrupt(const Session& s, const CorruptionMap& map);

/// 15 unseen utterances x 3 test-column states with the condition's words
/// corrupted; capped at condition_session_count sessions.
std::vector<Session> build_recovery_sessions(const SplitSpec& split, RecoveryCondition condition,
                                             std::uint64_t seed);
/// The single validation session: all validation-vocabulary words corrupted.
Session build_validation_recovery_session(const SplitSpec& split, std::uint64_t seed);

/// Vocabulary bijection plus a permutation of the five template slots.
struct Scrambler {
  std::map<std::string, std::string> words;
  std::array<int, 5> order{0, 1, 2, 3, 4};

  static Scrambler make(std::uint64_t seed);
  Utterance apply(const Utterance& u) const;
  Utterance invert(const Utterance& u) const;
};

Dataset scramble_language(const Dataset& ds, std::uint64_t seed);
Session scramble_language(const Session& s, const Scrambler& scrambler);

/// Grammar session re-spoken by an unknown speaker: scrambled, then the
/// test-vocabulary words (as scrambled) replaced by nonce tokens.
std::vector<Session> build_dialect_sessions(const SplitSpec& split, std::size_t count,
                                            std::uint64_t seed);

// Tab-separated dataset lines: utterance \t start tokens \t target tokens.
void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in, std::string tag = {});
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

std::string split_to_json(const SplitSpec& split);
SplitSpec split_from_json(const std::string& text);

}  // namespace shrdlurn
