#include "shrdlurn/blockworld.hpp"

#include <algorithm>
#include <sstream>

namespace shrdlurn {

Pile::Pile(std::initializer_list<Color> blocks) {
  if (blocks.size() > kPileCapacity) {
    throw std::invalid_argument("pile holds at most 3 blocks");
  }
  for (Color c : blocks) push(c);
}

std::optional<Color> Pile::top() const {
  if (height_ == 0) return std::nullopt;
  return blocks_[height_ - 1];
}

bool Pile::push(Color c) {
  if (full()) return false;
  blocks_[height_++] = c;
  return true;
}

bool Pile::pop() {
  if (empty()) return false;
  --height_;
  blocks_[height_] = Color::red;
  return true;
}

bool operator==(const Pile& a, const Pile& b) {
  return a.height_ == b.height_ &&
         std::equal(a.blocks_.begin(), a.blocks_.begin() + a.height_, b.blocks_.begin());
}

bool operator<(const Pile& a, const Pile& b) {
  if (a.height_ != b.height_) return a.height_ < b.height_;
  return std::lexicographical_compare(a.blocks_.begin(), a.blocks_.begin() + a.height_,
                                      b.blocks_.begin(), b.blocks_.begin() + b.height_);
}

std::string_view color_word(Color c) {
  switch (c) {
    case Color::red: return "red";
    case Color::cyan: return "cyan";
    case Color::brown: return "brown";
    case Color::orange: return "orange";
  }
  return "";
}

std::string_view verb_word(Verb v) { return v == Verb::add ? "add" : "remove"; }

std::string_view position_word(Position p) {
  static constexpr std::array<std::string_view, 11> kWords{
      "1st", "2nd", "3rd", "4th", "5th", "6th", "even", "odd", "leftmost", "rightmost", "every"};
  return kWords[static_cast<std::size_t>(p)];
}

std::string_view state_token_text(StateToken t) {
  static constexpr std::array<std::string_view, kNumStateTokens> kText{
      "RED", "CYAN", "BROWN", "ORANGE", "X", "#"};
  return kText[static_cast<std::size_t>(t)];
}

const std::vector<std::string>& grammar_vocabulary() {
  static const std::vector<std::string> vocab = [] {
    std::vector<std::string> v;
    for (Verb x : kVerbs) v.emplace_back(verb_word(x));
    for (Color x : kColors) v.emplace_back(color_word(x));
    v.emplace_back("at");
    for (Position x : kPositions) v.emplace_back(position_word(x));
    v.emplace_back("tile");
    return v;
  }();
  return vocab;
}

Utterance utterance_of(const Instruction& instr) {
  return {std::string(verb_word(instr.verb)), std::string(color_word(instr.color)), "at",
          std::string(position_word(instr.position)), "tile"};
}

std::string join_tokens(std::span<const std::string> tokens, char sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(sep);
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

namespace {

template <typename Enum, std::size_t N, typename WordFn>
std::optional<Enum> lookup_word(const std::array<Enum, N>& values, WordFn word,
                                std::string_view w) {
  for (Enum v : values) {
    if (word(v) == w) return v;
  }
  return std::nullopt;
}

}  // namespace

std::optional<Instruction> parse_utterance(std::span<const std::string> tokens) {
  if (tokens.size() != 5 || tokens[2] != "at" || tokens[4] != "tile") return std::nullopt;
  auto verb = lookup_word(kVerbs, verb_word, tokens[0]);
  auto color = lookup_word(kColors, color_word, tokens[1]);
  auto pos = lookup_word(kPositions, position_word, tokens[3]);
  if (!verb || !color || !pos) return std::nullopt;
  return Instruction{*verb, *color, *pos};
}

std::vector<int> select_piles(Position pos) {
  switch (pos) {
    case Position::even: return {2, 4, 6};
    case Position::odd: return {1, 3, 5};
    case Position::leftmost: return {1};
    case Position::rightmost: return {kNumPiles};
    case Position::every: return {1, 2, 3, 4, 5, 6};
    default: return {static_cast<int>(pos) + 1};
  }
}

WorldState apply(const Instruction& instr, const WorldState& s) {
  WorldState out = s;
  for (int i : select_piles(instr.position)) {
    Pile& pile = out.piles[static_cast<std::size_t>(i - 1)];
    if (instr.verb == Verb::add) {
      pile.push(instr.color);
    } else if (pile.top() == instr.color) {
      pile.pop();
    }
  }
  return out;
}

std::array<int, kStateLength> state_token_ids(const WorldState& s) {
  std::array<int, kStateLength> ids{};
  std::size_t k = 0;
  for (int p = 0; p < kNumPiles; ++p) {
    if (p) ids[k++] = static_cast<int>(StateToken::delim);
    const Pile& pile = s.piles[static_cast<std::size_t>(p)];
    for (int slot = 0; slot < kPileCapacity; ++slot) {
      ids[k++] = slot < pile.height() ? static_cast<int>(pile.at(slot))
                                      : static_cast<int>(StateToken::empty);
    }
  }
  return ids;
}

std::vector<std::string> serialize_state(const WorldState& s) {
  std::vector<std::string> out;
  out.reserve(kStateLength);
  for (int id : state_token_ids(s)) {
    out.emplace_back(state_token_text(static_cast<StateToken>(id)));
  }
  return out;
}

WorldState state_from_ids(std::span<const int> ids) {
  if (ids.size() != kStateLength) {
    throw FormatError("state must have " + std::to_string(kStateLength) + " tokens, got " +
                      std::to_string(ids.size()));
  }
  WorldState s;
  for (int p = 0; p < kNumPiles; ++p) {
    const std::size_t base = static_cast<std::size_t>(p * (kPileCapacity + 1));
    if (p > 0 && ids[base - 1] != static_cast<int>(StateToken::delim)) {
      throw FormatError("expected delimiter at position " + std::to_string(base - 1));
    }
    bool ended = false;
    for (int slot = 0; slot < kPileCapacity; ++slot) {
      const int id = ids[base + static_cast<std::size_t>(slot)];
      if (id == static_cast<int>(StateToken::empty)) {
        ended = true;
      } else if (id >= 0 && id < 4) {
        if (ended) throw FormatError("floating block in pile " + std::to_string(p + 1));
        s.piles[static_cast<std::size_t>(p)].push(static_cast<Color>(id));
      } else {
        throw FormatError("unexpected token in pile " + std::to_string(p + 1));
      }
    }
  }
  return s;
}

WorldState deserialize_state(std::span<const std::string> tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) {
    int id = -1;
    for (int t = 0; t < kNumStateTokens; ++t) {
      if (state_token_text(static_cast<StateToken>(t)) == tok) id = t;
    }
    if (id < 0) throw FormatError("unknown state token '" + tok + "'");
    ids.push_back(id);
  }
  return state_from_ids(ids);
}

std::vector<Instruction> all_instructions() {
  std::vector<Instruction> out;
  for (Verb v : kVerbs)
    for (Color c : kColors)
      for (Position p : kPositions) out.push_back({v, c, p});
  return out;
}

std::vector<Pile> all_columns() {
  std::vector<Pile> out{Pile{}};
  std::vector<Pile> frontier{Pile{}};
  for (int h = 1; h <= kPileCapacity; ++h) {
    std::vector<Pile> next;
    for (const Pile& base : frontier) {
      for (Color c : kColors) {
        Pile p = base;
        p.push(c);
        next.push_back(p);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

std::string pile_key(const Pile& p) {
  std::string key;
  for (int i = 0; i < p.height(); ++i) {
    if (i) key.push_back(' ');
    key += state_token_text(static_cast<StateToken>(p.at(i)));
  }
  return key.empty() ? "-" : key;
}

std::string to_string(const WorldState& s) { return join_tokens(serialize_state(s)); }

}  // namespace shrdlurn
