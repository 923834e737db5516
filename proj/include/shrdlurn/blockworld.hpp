#pragma once

// Blocks world of the SHRDLURN game: six piles of at most three colored
// blocks, the instruction grammar, its rule-based interpreter and the
// fixed-width token serialization used by the neural models.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace shrdlurn {

inline constexpr int kNumPiles = 6;
inline constexpr int kPileCapacity = 3;
// 6 groups of 3 slots joined by 5 delimiters.
inline constexpr int kStateLength = kNumPiles * kPileCapacity + kNumPiles - 1;

enum class Color : std::uint8_t { red, cyan, brown, orange };
inline constexpr std::array<Color, 4> kColors{Color::red, Color::cyan, Color::brown,
                                              Color::orange};

enum class Verb : std::uint8_t { add, remove };
inline constexpr std::array<Verb, 2> kVerbs{Verb::add, Verb::remove};

enum class Position : std::uint8_t {
  p1, p2, p3, p4, p5, p6, even, odd, leftmost, rightmost, every
};
inline constexpr std::array<Position, 11> kPositions{
    Position::p1,   Position::p2,  Position::p3,       Position::p4,
    Position::p5,   Position::p6,  Position::even,     Position::odd,
    Position::leftmost, Position::rightmost, Position::every};

// State token ids. The order fixes the output layer of every decoder.
enum class StateToken : std::uint8_t { red, cyan, brown, orange, empty, delim };
inline constexpr int kNumStateTokens = 6;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pile of blocks, bottom-first, holding at most kPileCapacity blocks.
class Pile {
 public:
  Pile() = default;
  Pile(std::initializer_list<Color> blocks);

  int height() const { return height_; }
  bool empty() const { return height_ == 0; }
  bool full() const { return height_ == kPileCapacity; }
  Color at(int i) const { return blocks_.at(static_cast<std::size_t>(i)); }
  std::optional<Color> top() const;

  // Both return false and leave the pile untouched when impossible.
  bool push(Color c);
  bool pop();

  friend bool operator==(const Pile& a, const Pile& b);
  friend bool operator<(const Pile& a, const Pile& b);

 private:
  std::array<Color, kPileCapacity> blocks_{};
  std::uint8_t height_ = 0;
};

struct WorldState {
  std::array<Pile, kNumPiles> piles{};
  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct Instruction {
  Verb verb = Verb::add;
  Color color = Color::red;
  Position position = Position::p1;
  friend bool operator==(const Instruction&, const Instruction&) = default;
};

using Utterance = std::vector<std::string>;

std::string_view color_word(Color c);
std::string_view verb_word(Verb v);
std::string_view position_word(Position p);
std::string_view state_token_text(StateToken t);

/// Lowercase words of the grammar: verbs, colors, positions, "at", "tile".
const std::vector<std::string>& grammar_vocabulary();

Utterance utterance_of(const Instruction& instr);
std::string join_tokens(std::span<const std::string> tokens, char sep = ' ');
std::vector<std::string> split_tokens(std::string_view text);

/// The unique instruction spelled by `tokens`, or nullopt for anything
/// outside the 88-sentence language.
std::optional<Instruction> parse_utterance(std::span<const std::string> tokens);

/// 1-based pile indices addressed by a position word.
std::vector<int> select_piles(Position pos);

WorldState apply(const Instruction& instr, const WorldState& s);

std::vector<std::string> serialize_state(const WorldState& s);
std::array<int, kStateLength> state_token_ids(const WorldState& s);

/// Throws FormatError on wrong length, misplaced delimiters, floating
/// blocks or unknown tokens.
WorldState deserialize_state(std::span<const std::string> tokens);
WorldState state_from_ids(std::span<const int> ids);

/// All 2 x 4 x 11 instructions in a fixed order.
std::vector<Instruction> all_instructions();
/// All 85 valid columns (empty, then by height, then lexicographic).
std::vector<Pile> all_columns();

std::string pile_key(const Pile& p);
std::string to_string(const WorldState& s);

}  // namespace shrdlurn
