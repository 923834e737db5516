#include <map>
#include <set>

#include "doctest.h"
#include "oracle.hpp"
#include "shrdlurn/blockworld.hpp"
#include "shrdlurn/datagen.hpp"

using namespace shrdlurn;

namespace {

WorldState example_start() {
  WorldState s;
  s.piles[0] = {Color::brown};
  s.piles[1] = {Color::red};
  s.piles[2] = {Color::orange, Color::red};
  return s;
}

}  // namespace

TEST_CASE("parse accepts exactly the template sentences") {
  auto r = parse_utterance(split_tokens("remove red at 3rd tile"));
  REQUIRE(r.has_value());
  CHECK(*r == Instruction{Verb::remove, Color::red, Position::p3});
  auto e = parse_utterance(split_tokens("add cyan at every tile"));
  REQUIRE(e.has_value());
  CHECK(*e == Instruction{Verb::add, Color::cyan, Position::every});
  CHECK_FALSE(parse_utterance(split_tokens("rmv braun at evr tile")));
  CHECK_FALSE(parse_utterance(split_tokens("remove red at 3rd")));
  CHECK_FALSE(parse_utterance(split_tokens("remove red at 3rd tile tile")));
  CHECK_FALSE(parse_utterance(split_tokens("red remove at 3rd tile")));
  CHECK_FALSE(parse_utterance({}));
}

TEST_CASE("88 sentences parse among all 5-token strings of the template shape") {
  // Every word in every slot; only the grammar's own order parses.
  const auto& vocab = grammar_vocabulary();
  std::set<std::string> parsed;
  for (const auto& a : vocab)
    for (const auto& b : vocab)
      for (const auto& d : vocab) {
        Utterance u{a, b, "at", d, "tile"};
        if (parse_utterance(u)) parsed.insert(join_tokens(u));
      }
  CHECK(parsed.size() == 88);
  CHECK(all_instructions().size() == 88);
  for (const auto& i : all_instructions()) {
    auto back = parse_utterance(utterance_of(i));
    REQUIRE(back);
    CHECK(*back == i);
  }
}

TEST_CASE("position semantics") {
  CHECK(select_piles(Position::p3) == std::vector<int>{3});
  CHECK(select_piles(Position::every) == std::vector<int>{1, 2, 3, 4, 5, 6});
  CHECK(select_piles(Position::even) == std::vector<int>{2, 4, 6});
  CHECK(select_piles(Position::odd) == std::vector<int>{1, 3, 5});
  CHECK(select_piles(Position::leftmost) == std::vector<int>{1});
  CHECK(select_piles(Position::rightmost) == std::vector<int>{6});
}

TEST_CASE("worked example: remove red at 3rd tile") {
  const WorldState start = example_start();
  const WorldState out = apply({Verb::remove, Color::red, Position::p3}, start);
  WorldState expected = start;
  expected.piles[2] = {Color::orange};
  CHECK(out == expected);
  CHECK(join_tokens(serialize_state(start)) ==
        "BROWN X X # RED X X # ORANGE RED X # X X X # X X X # X X X");
  CHECK(join_tokens(serialize_state(out)) ==
        "BROWN X X # RED X X # ORANGE X X # X X X # X X X # X X X");
  CHECK(deserialize_state(serialize_state(start)) == start);
}

TEST_CASE("apply edge cases") {
  WorldState empty;
  WorldState all_red;
  for (auto& p : all_red.piles) p = {Color::red};
  CHECK(apply({Verb::add, Color::red, Position::every}, empty) == all_red);
  const WorldState s = example_start();
  CHECK(apply({Verb::remove, Color::orange, Position::every}, s) == s);
  WorldState full;
  full.piles[0] = {Color::cyan, Color::cyan, Color::cyan};
  CHECK(apply({Verb::add, Color::red, Position::p1}, full) == full);
  CHECK(apply({Verb::remove, Color::red, Position::p4}, s) == s);
}

TEST_CASE("interpreter agrees with the independent oracle") {
  const auto cols = all_columns();
  Rng rng(20240601);
  for (const auto& instr : all_instructions()) {
    const auto words = utterance_of(instr);
    for (int n = 0; n < 1000; ++n) {
      const WorldState s = sample_state(cols, rng);
      const auto expected = oracle::apply(words, oracle::from_tokens(serialize_state(s)));
      REQUIRE(oracle::to_tokens(expected) == serialize_state(apply(instr, s)));
    }
  }
}

TEST_CASE("85 columns") {
  const auto cols = all_columns();
  CHECK(cols.size() == 85);
  CHECK(oracle::count_columns() == 85);
  std::set<std::string> keys;
  for (const auto& c : cols) keys.insert(pile_key(c));
  CHECK(keys.size() == 85);
  CHECK(cols.front().empty());
}

TEST_CASE("apply keeps states valid and is idempotent where the pop condition clears") {
  const auto cols = all_columns();
  for (const auto& instr : all_instructions()) {
    for (const auto& c : cols) {
      WorldState s;
      for (auto& p : s.piles) p = c;
      const WorldState once = apply(instr, s);
      for (const auto& p : once.piles) CHECK(p.height() <= kPileCapacity);
      CHECK(deserialize_state(serialize_state(once)) == once);
      if (instr.verb == Verb::remove) {
        int same = 0;
        for (int i = 0; i < c.height(); ++i) same += c.at(i) == instr.color;
        if (same <= 1) CHECK(apply(instr, once) == once);
      }
    }
  }
}

TEST_CASE("serialization round trip and rejection") {
  const auto cols = all_columns();
  Rng rng(3);
  for (int n = 0; n < 1000; ++n) {
    const WorldState s = sample_state(cols, rng);
    const auto tokens = serialize_state(s);
    CHECK(tokens.size() == kStateLength);
    CHECK(deserialize_state(tokens) == s);
    CHECK(state_from_ids(state_token_ids(s)) == s);
  }
  CHECK(join_tokens(serialize_state(WorldState{})) ==
        "X X X # X X X # X X X # X X X # X X X # X X X");

  auto tokens = serialize_state(example_start());
  auto short_tokens = tokens;
  short_tokens.pop_back();
  CHECK_THROWS_AS(deserialize_state(short_tokens), FormatError);
  auto floating = serialize_state(WorldState{});
  floating[1] = "RED";
  CHECK_THROWS_AS(deserialize_state(floating), FormatError);
  auto bad_delim = tokens;
  std::swap(bad_delim[3], bad_delim[4]);
  CHECK_THROWS_AS(deserialize_state(bad_delim), FormatError);
  auto unknown = tokens;
  unknown[0] = "PURPLE";
  CHECK_THROWS_AS(deserialize_state(unknown), FormatError);
  auto lower = tokens;
  lower[0] = "brown";
  CHECK_THROWS_AS(deserialize_state(lower), FormatError);
}
