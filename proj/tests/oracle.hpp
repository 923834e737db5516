#pragma once

// Brute-force reference for the blocks world, written against the game
// rules without using the library: piles are lists of color names.

#include <stdexcept>
#include <string>
#include <vector>

namespace oracle {

using Piles = std::vector<std::vector<std::string>>;

inline Piles from_tokens(const std::vector<std::string>& tokens) {
  Piles piles(1);
  for (const auto& t : tokens) {
    if (t == "#") piles.emplace_back();
    else if (t != "X") piles.back().push_back(t);
  }
  return piles;
}

inline std::vector<std::string> to_tokens(const Piles& piles) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < piles.size(); ++i) {
    if (i > 0) out.push_back("#");
    for (std::size_t k = 0; k < 3; ++k) out.push_back(k < piles[i].size() ? piles[i][k] : "X");
  }
  return out;
}

inline bool addressed(const std::string& pos, int pile) {  // pile is 1-based
  if (pos == "every") return true;
  if (pos == "even") return pile % 2 == 0;
  if (pos == "odd") return pile % 2 == 1;
  if (pos == "leftmost") return pile == 1;
  if (pos == "rightmost") return pile == 6;
  const std::string ordinals[] = {"1st", "2nd", "3rd", "4th", "5th", "6th"};
  return ordinals[pile - 1] == pos;
}

inline std::string upper(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(ch - 'a' + 'A');
  return s;
}

/// words = {verb, color, "at", position, "tile"}
inline Piles apply(const std::vector<std::string>& words, Piles piles) {
  if (words.size() != 5) throw std::invalid_argument("not a template sentence");
  const std::string color = upper(words[1]);
  for (int i = 1; i <= 6; ++i) {
    if (!addressed(words[3], i)) continue;
    auto& p = piles[static_cast<std::size_t>(i - 1)];
    if (words[0] == "add" && p.size() < 3) p.push_back(color);
    if (words[0] == "remove" && !p.empty() && p.back() == color) p.pop_back();
  }
  return piles;
}

inline int count_columns() {
  int n = 1, layer = 1;
  for (int h = 1; h <= 3; ++h) {
    layer *= 4;
    n += layer;
  }
  return n;
}

}  // namespace oracle
