#include "shrdlurn/datagen.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace shrdlurn {

namespace {

constexpr std::size_t kRecoveryUtterances = 15;
constexpr std::size_t kStatesPerUtterance = 3;
constexpr int kEffectiveStateAttempts = 1000;

std::size_t idx(Split s) { return static_cast<std::size_t>(s); }

bool is_grammar_word(const std::string& w) {
  const auto& v = grammar_vocabulary();
  return std::find(v.begin(), v.end(), w) != v.end();
}

template <typename T>
void seeded_shuffle(std::vector<T>& items, Rng& rng) {
  rng.shuffle(std::span<T>(items));
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "";
}

CorruptionMap::CorruptionMap(std::map<std::string, std::string> mapping)
    : mapping_(std::move(mapping)) {
  std::set<std::string> images;
  for (const auto& [from, to] : mapping_) {
    if (to.empty()) throw std::invalid_argument("empty replacement for '" + from + "'");
    if (is_grammar_word(to)) {
      throw std::invalid_argument("replacement '" + to + "' is a grammar word");
    }
    if (!images.insert(to).second) {
      throw std::invalid_argument("corruption map is not injective at '" + to + "'");
    }
  }
}

Utterance CorruptionMap::apply(const Utterance& u) const {
  Utterance out = u;
  for (auto& tok : out) {
    if (auto it = mapping_.find(tok); it != mapping_.end()) tok = it->second;
  }
  return out;
}

Utterance CorruptionMap::invert(const Utterance& u) const {
  std::map<std::string, std::string> inverse;
  for (const auto& [from, to] : mapping_) inverse.emplace(to, from);
  Utterance out = u;
  for (auto& tok : out) {
    if (auto it = inverse.find(tok); it != inverse.end()) tok = it->second;
  }
  return out;
}

std::string corrupted_spelling(const std::string& word) {
  static const std::map<std::string, std::string> kSpelling{
      {"add", "ajd"},       {"remove", "rmv"},     {"red", "roze"},
      {"cyan", "ciaan"},    {"brown", "braun"},    {"orange", "oranje"},
      {"1st", "frst"},      {"2nd", "scnd"},       {"3rd", "thrd"},
      {"4th", "frth"},      {"5th", "ffth"},       {"6th", "sxth"},
      {"even", "evn"},      {"odd", "ohd"},        {"leftmost", "lftmst"},
      {"rightmost", "rghtmst"}, {"every", "evr"},  {"at", "ad"},
      {"tile", "tyl"}};
  if (auto it = kSpelling.find(word); it != kSpelling.end()) return it->second;
  return word + "_x";
}

CorruptionMap corruption_for(const std::vector<std::string>& words) {
  std::map<std::string, std::string> m;
  for (const auto& w : words) m.emplace(w, corrupted_spelling(w));
  return CorruptionMap(std::move(m));
}

std::string_view condition_name(RecoveryCondition c) {
  switch (c) {
    case RecoveryCondition::one: return "1";
    case RecoveryCondition::two: return "2";
    case RecoveryCondition::three: return "3";
    case RecoveryCondition::all: return "all";
  }
  return "";
}

std::size_t condition_session_count(RecoveryCondition c) {
  switch (c) {
    case RecoveryCondition::one: return 7;
    case RecoveryCondition::two: return 17;
    case RecoveryCondition::three: return 10;
    case RecoveryCondition::all: return 1;
  }
  return 0;
}

const std::vector<std::string>& validation_corruption_vocabulary() {
  static const std::vector<std::string> v{"add", "orange", "red", "1st", "3rd", "5th", "even"};
  return v;
}

std::optional<WordType> word_type(const std::string& word) {
  for (Verb v : kVerbs)
    if (verb_word(v) == word) return WordType::verb;
  for (Color c : kColors)
    if (color_word(c) == word) return WordType::color;
  for (Position p : kPositions)
    if (position_word(p) == word) return WordType::position;
  return std::nullopt;
}

std::vector<std::string> test_corruption_vocabulary() {
  const auto& val = validation_corruption_vocabulary();
  std::vector<std::string> out;
  for (const auto& w : grammar_vocabulary()) {
    if (!word_type(w)) continue;
    if (std::find(val.begin(), val.end(), w) == val.end()) out.push_back(w);
  }
  return out;
}

SplitSpec make_split(std::uint64_t seed) {
  SplitSpec spec;
  spec.seed = seed;

  Rng utt_rng(derive_seed(seed, 1));
  auto instrs = all_instructions();
  seeded_shuffle(instrs, utt_rng);
  const std::array<std::size_t, 3> utt_sizes{66, 11, 11};
  std::size_t pos = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    spec.utterances[s].assign(instrs.begin() + static_cast<std::ptrdiff_t>(pos),
                              instrs.begin() + static_cast<std::ptrdiff_t>(pos + utt_sizes[s]));
    pos += utt_sizes[s];
  }

  Rng col_rng(derive_seed(seed, 2));
  auto cols = all_columns();
  seeded_shuffle(cols, col_rng);
  const std::array<std::size_t, 3> col_sizes{69, 8, 8};
  pos = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    spec.columns[s].assign(cols.begin() + static_cast<std::ptrdiff_t>(pos),
                           cols.begin() + static_cast<std::ptrdiff_t>(pos + col_sizes[s]));
    pos += col_sizes[s];
  }
  return spec;
}

WorldState sample_state(std::span<const Pile> pool, Rng& rng) {
  if (pool.empty()) throw std::invalid_argument("empty column pool");
  WorldState s;
  for (auto& pile : s.piles) pile = pool[rng.index(pool.size())];
  return s;
}

ExampleTriple generate_example(const SplitSpec& split, Split part, std::size_t index) {
  Rng rng(derive_seed(split.seed, (static_cast<std::uint64_t>(idx(part)) << 40) + index));
  const auto& utts = split.utterances_of(part);
  const Instruction& instr = utts[rng.index(utts.size())];
  ExampleTriple ex;
  ex.utterance = utterance_of(instr);
  ex.start = sample_state(split.columns_of(part), rng);
  ex.target = apply(instr, ex.start);
  return ex;
}

Dataset generate_split(const SplitSpec& split, Split part, std::size_t count) {
  Dataset ds;
  ds.tag = std::string(split_name(part));
  ds.examples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) ds.examples.push_back(generate_example(split, part, i));
  return ds;
}

std::array<Dataset, 3> generate(const SplitSpec& split, const DatasetCounts& counts) {
  return {generate_split(split, Split::train, counts.train),
          generate_split(split, Split::val, counts.val),
          generate_split(split, Split::test, counts.test)};
}

Dataset corrupt(const Dataset& ds, const CorruptionMap& map) {
  Dataset out = ds;
  for (auto& ex : out.examples) ex.utterance = map.apply(ex.utterance);
  return out;
}

Session corrupt(const Session& s, const CorruptionMap& map) {
  Session out = s;
  for (auto& ex : out.examples) ex.utterance = map.apply(ex.utterance);
  std::map<std::string, std::string> merged = s.corruption.mapping();
  for (const auto& [k, v] : map.mapping()) merged[k] = v;
  out.corruption = CorruptionMap(std::move(merged));
  return out;
}

namespace {

std::vector<std::vector<std::string>> corruption_word_sets(RecoveryCondition condition) {
  const auto vocab = test_corruption_vocabulary();
  std::vector<std::vector<std::string>> sets;
  const std::size_t n = vocab.size();
  auto distinct_types = [&](std::initializer_list<std::size_t> ids) {
    std::set<WordType> types;
    for (std::size_t i : ids) types.insert(*word_type(vocab[i]));
    return types.size() == ids.size();
  };
  switch (condition) {
    case RecoveryCondition::one:
      for (const auto& w : vocab) sets.push_back({w});
      break;
    case RecoveryCondition::two:
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
          if (distinct_types({a, b})) sets.push_back({vocab[a], vocab[b]});
      break;
    case RecoveryCondition::three:
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
          for (std::size_t c = b + 1; c < n; ++c)
            if (distinct_types({a, b, c})) sets.push_back({vocab[a], vocab[b], vocab[c]});
      break;
    case RecoveryCondition::all:
      sets.push_back(vocab);
      break;
  }
  return sets;
}

bool mentions_any(const Instruction& instr, const std::vector<std::string>& words) {
  for (const auto& tok : utterance_of(instr)) {
    if (std::find(words.begin(), words.end(), tok) != words.end()) return true;
  }
  return false;
}

Session build_corrupted_session(const SplitSpec& split, const std::vector<std::string>& words,
                                std::uint64_t session_seed, std::string id) {
  Rng rng(session_seed);
  std::vector<Instruction> hit;
  std::vector<Instruction> miss;
  for (Split part : {Split::val, Split::test}) {
    for (const auto& instr : split.utterances_of(part)) {
      (mentions_any(instr, words) ? hit : miss).push_back(instr);
    }
  }
  seeded_shuffle(hit, rng);
  seeded_shuffle(miss, rng);
  hit.insert(hit.end(), miss.begin(), miss.end());
  hit.resize(std::min(hit.size(), kRecoveryUtterances));

  Session session;
  session.id = std::move(id);
  const auto& pool = split.columns_of(Split::test);
  for (const auto& instr : hit) {
    for (std::size_t k = 0; k < kStatesPerUtterance; ++k) {
      ExampleTriple ex;
      ex.utterance = utterance_of(instr);
      // a simulated user only issues instructions that do something
      for (int attempt = 0; attempt < kEffectiveStateAttempts; ++attempt) {
        ex.start = sample_state(pool, rng);
        ex.target = apply(instr, ex.start);
        if (ex.target != ex.start) break;
      }
      session.examples.push_back(std::move(ex));
    }
  }
  seeded_shuffle(session.examples, rng);
  return corrupt(session, corruption_for(words));
}

}  // namespace

std::vector<Session> build_recovery_sessions(const SplitSpec& split, RecoveryCondition condition,
                                             std::uint64_t seed) {
  auto sets = corruption_word_sets(condition);
  const auto cond_tag = static_cast<std::uint64_t>(condition);
  Rng pick(derive_seed(seed, 100 + cond_tag));
  seeded_shuffle(sets, pick);
  sets.resize(std::min(sets.size(), condition_session_count(condition)));

  std::vector<Session> out;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    std::string id = "recovery-" + std::string(condition_name(condition)) + "-" +
                     std::to_string(i) + ":" + join_tokens(sets[i], ',');
    out.push_back(build_corrupted_session(split, sets[i],
                                          derive_seed(seed, (cond_tag + 1) * 1000 + i),
                                          std::move(id)));
  }
  return out;
}

Session build_validation_recovery_session(const SplitSpec& split, std::uint64_t seed) {
  return build_corrupted_session(split, validation_corruption_vocabulary(),
                                 derive_seed(seed, 99), "recovery-validation");
}

Scrambler Scrambler::make(std::uint64_t seed) {
  Scrambler s;
  Rng rng(derive_seed(seed, 7));
  const auto& vocab = grammar_vocabulary();
  std::vector<std::string> images = vocab;
  seeded_shuffle(images, rng);
  for (std::size_t i = 0; i < vocab.size(); ++i) s.words.emplace(vocab[i], images[i]);
  rng.shuffle(std::span<int>(s.order));
  return s;
}

Utterance Scrambler::apply(const Utterance& u) const {
  Utterance mapped = u;
  for (auto& tok : mapped) {
    if (auto it = words.find(tok); it != words.end()) tok = it->second;
  }
  if (mapped.size() != order.size()) return mapped;
  Utterance out(mapped.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    out[i] = mapped[static_cast<std::size_t>(order[i])];
  }
  return out;
}

Utterance Scrambler::invert(const Utterance& u) const {
  Utterance unpermuted = u;
  if (u.size() == order.size()) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      unpermuted[static_cast<std::size_t>(order[i])] = u[i];
    }
  }
  std::map<std::string, std::string> inverse;
  for (const auto& [from, to] : words) inverse.emplace(to, from);
  for (auto& tok : unpermuted) {
    if (auto it = inverse.find(tok); it != inverse.end()) tok = it->second;
  }
  return unpermuted;
}

Dataset scramble_language(const Dataset& ds, std::uint64_t seed) {
  const Scrambler scrambler = Scrambler::make(seed);
  Dataset out = ds;
  for (auto& ex : out.examples) ex.utterance = scrambler.apply(ex.utterance);
  return out;
}

Session scramble_language(const Session& s, const Scrambler& scrambler) {
  Session out = s;
  for (auto& ex : out.examples) ex.utterance = scrambler.apply(ex.utterance);
  return out;
}

std::vector<Session> build_dialect_sessions(const SplitSpec& split, std::size_t count,
                                            std::uint64_t seed) {
  const auto nonce_words = test_corruption_vocabulary();
  std::vector<Session> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = derive_seed(seed, 5000 + i);
    Session base = build_corrupted_session(split, {}, s, "dialect-" + std::to_string(i));
    Session scrambled = scramble_language(base, Scrambler::make(s));
    out.push_back(corrupt(scrambled, corruption_for(nonce_words)));
  }
  return out;
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  for (const auto& ex : ds.examples) {
    out << join_tokens(ex.utterance) << '\t' << to_string(ex.start) << '\t'
        << to_string(ex.target) << '\n';
  }
}

Dataset read_dataset(std::istream& in, std::string tag) {
  Dataset ds;
  ds.tag = std::move(tag);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<std::string, 3> fields;
    std::size_t start = 0;
    for (std::size_t f = 0; f < 3; ++f) {
      const std::size_t tab = line.find('\t', start);
      if ((f < 2) != (tab != std::string::npos)) {
        throw FormatError("line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
      }
      fields[f] = line.substr(start, tab == std::string::npos ? std::string::npos : tab - start);
      start = tab + 1;
    }
    try {
      ExampleTriple ex;
      ex.utterance = split_tokens(fields[0]);
      if (ex.utterance.empty()) throw FormatError("empty utterance");
      ex.start = deserialize_state(split_tokens(fields[1]));
      ex.target = deserialize_state(split_tokens(fields[2]));
      ds.examples.push_back(std::move(ex));
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_dataset(out, ds);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_dataset(in, path);
}

std::string split_to_json(const SplitSpec& split) {
  nlohmann::json j;
  j["seed"] = split.seed;
  for (Split s : kSplits) {
    auto& node = j[std::string(split_name(s))];
    node["utterances"] = nlohmann::json::array();
    for (const auto& instr : split.utterances_of(s)) {
      node["utterances"].push_back(join_tokens(utterance_of(instr)));
    }
    node["columns"] = nlohmann::json::array();
    for (const auto& pile : split.columns_of(s)) {
      nlohmann::json col = nlohmann::json::array();
      for (int i = 0; i < pile.height(); ++i) {
        col.push_back(state_token_text(static_cast<StateToken>(pile.at(i))));
      }
      node["columns"].push_back(col);
    }
  }
  return j.dump(2);
}

SplitSpec split_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SplitSpec spec;
  spec.seed = j.at("seed").get<std::uint64_t>();
  for (Split s : kSplits) {
    const auto& node = j.at(std::string(split_name(s)));
    for (const auto& u : node.at("utterances")) {
      auto instr = parse_utterance(split_tokens(u.get<std::string>()));
      if (!instr) throw FormatError("split lists a non-grammar utterance: " + u.get<std::string>());
      spec.utterances[idx(s)].push_back(*instr);
    }
    for (const auto& col : node.at("columns")) {
      Pile p;
      for (const auto& tok : col) {
        const auto t = tok.get<std::string>();
        bool ok = false;
        for (Color c : kColors) {
          if (state_token_text(static_cast<StateToken>(c)) == t) ok = p.push(c);
        }
        if (!ok) throw FormatError("bad column token " + t);
      }
      spec.columns[idx(s)].push_back(p);
    }
  }
  return spec;
}

}  // namespace shrdlurn
