#include "shrdlurn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "shrdlurn/log.hpp"

namespace shrdlurn {

namespace {

using nlohmann::json;

std::vector<std::string> token_list(const json& j, const char* field) {
  if (!j.contains(field)) throw FormatError(std::string("missing field '") + field + "'");
  const json& v = j.at(field);
  if (v.is_string()) return split_tokens(v.get<std::string>());
  if (!v.is_array()) throw FormatError(std::string("field '") + field + "' must be a list");
  std::vector<std::string> out;
  for (const auto& t : v) {
    if (!t.is_string()) throw FormatError(std::string("non-string token in '") + field + "'");
    out.push_back(t.get<std::string>());
  }
  return out;
}

// Raw session fields; state validation happens separately so a bad state
// only drops its session.
struct RawExample {
  Utterance utt;
  std::vector<std::string> start, target;
};

struct RawSession {
  std::string id;
  std::vector<RawExample> examples;
  std::optional<double> accuracy;
  std::map<std::string, std::string> corruption;
};

RawSession raw_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("session must be a JSON object");
  RawSession s;
  if (j.contains("id")) {
    const json& id = j.at("id");
    s.id = id.is_string() ? id.get<std::string>() : id.dump();
  }
  if (!j.contains("examples") || !j.at("examples").is_array()) {
    throw FormatError("missing 'examples' list");
  }
  for (const auto& e : j.at("examples")) {
    if (!e.is_object()) throw FormatError("example must be a JSON object");
    s.examples.push_back({token_list(e, "utt"), token_list(e, "start"), token_list(e, "target")});
  }
  if (j.contains("accuracy") && !j.at("accuracy").is_null()) {
    if (!j.at("accuracy").is_number()) throw FormatError("'accuracy' must be a number");
    s.accuracy = j.at("accuracy").get<double>();
  }
  if (j.contains("corruption")) {
    if (!j.at("corruption").is_object()) throw FormatError("'corruption' must be an object");
    s.corruption = j.at("corruption").get<std::map<std::string, std::string>>();
  }
  return s;
}

// Throws FormatError describing the first invalid example.
Session validate(RawSession raw) {
  Session s;
  s.id = std::move(raw.id);
  s.external_accuracy = raw.accuracy;
  s.corruption = CorruptionMap(std::move(raw.corruption));
  for (std::size_t i = 0; i < raw.examples.size(); ++i) {
    auto& e = raw.examples[i];
    try {
      if (e.utt.empty()) throw FormatError("empty utterance");
      s.examples.push_back({std::move(e.utt), deserialize_state(e.start), deserialize_state(e.target)});
    } catch (const FormatError& err) {
      throw FormatError("example " + std::to_string(i) + ": " + err.what());
    }
  }
  return s;
}

void accept(IngestReport& report, const json& j, std::size_t line) {
  RawSession raw = raw_from_json(j);
  if (raw.id.empty()) raw.id = "session-" + std::to_string(report.sessions.size() + report.skipped.size());
  const std::string id = raw.id;
  try {
    Session s = validate(std::move(raw));
    report.examples += s.examples.size();
    report.sessions.push_back(std::move(s));
  } catch (const std::exception& err) {
    std::string msg = "line " + std::to_string(line) + ": skipped session '" + id + "': " + err.what();
    log_info("warning: ", msg);
    report.skipped.push_back(std::move(msg));
  }
}

std::string percent(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * x;
  return os.str();
}

}  // namespace

json session_to_json(const Session& s) {
  json examples = json::array();
  for (const auto& ex : s.examples) {
    examples.push_back({{"utt", ex.utterance},
                        {"start", serialize_state(ex.start)},
                        {"target", serialize_state(ex.target)}});
  }
  json j = {{"id", s.id}, {"examples", examples}};
  if (s.external_accuracy) j["accuracy"] = *s.external_accuracy;
  if (!s.corruption.empty()) j["corruption"] = s.corruption.mapping();
  return j;
}

Session session_from_json(const json& j) { return validate(raw_from_json(j)); }

IngestReport read_sessions(std::istream& in) {
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  IngestReport report;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return report;

  if (text[first] == '[') {
    json all;
    try {
      all = json::parse(text);
    } catch (const json::parse_error& e) {
      // byte offset -> line number
      const auto upto = std::min<std::size_t>(e.byte, text.size());
      const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
      throw FormatError("line " + std::to_string(line) + ": " + e.what());
    }
    for (const auto& j : all) {
      try {
        accept(report, j, 1);
      } catch (const FormatError& e) {
        throw FormatError("line 1: " + std::string(e.what()));
      }
    }
  } else {
    std::istringstream lines(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(lines, line)) {
      ++number;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        accept(report, json::parse(line), number);
      } catch (const json::exception& e) {
        throw FormatError("line " + std::to_string(number) + ": " + e.what());
      } catch (const FormatError& e) {
        throw FormatError("line " + std::to_string(number) + ": " + e.what());
      }
    }
  }
  log_info("ingested ", report.sessions.size(), " sessions, ", report.examples, " examples, ",
           report.skipped.size(), " skipped");
  return report;
}

IngestReport ingest_sessions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_sessions(in);
}

void write_sessions(std::ostream& out, std::span<const Session> sessions) {
  for (const auto& s : sessions) out << session_to_json(s).dump() << '\n';
}

void save_sessions(const std::string& path, std::span<const Session> sessions) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_sessions(out, sessions);
}

std::vector<SessionResult> replay_sessions(const nn::Model<Real>& base, const AdaptConfig& config,
                                           std::span<const Session> sessions, unsigned threads) {
  config.validate();
  std::vector<SessionResult> out(sessions.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(sessions.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < sessions.size(); ++i) out[i] = run_session(base, config, sessions[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < sessions.size(); i = next++) {
        try {
          out[i] = run_session(base, config, sessions[i]);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: lengths differ");
  if (xs.size() < 2) throw std::invalid_argument("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0 || syy == 0) throw std::invalid_argument("pearson: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<Variant> recovery_variants() {
  AdaptConfig emb;
  AdaptConfig dec;
  dec.reuse = ReuseScope::dec;
  dec.adapt = AdaptScope::encoder;
  AdaptConfig none;
  none.reuse = ReuseScope::none;
  none.adapt = AdaptScope::all;
  AdaptConfig single = emb;
  single.k = 1;
  return {{"emb", emb}, {"dec+enc", dec}, {"none", none}, {"emb-k1", single}};
}

const RecoveryCell& RecoveryReport::cell(const std::string& variant, RecoveryCondition c) const {
  for (const auto& x : cells) {
    if (x.variant == variant && x.condition == c) return x;
  }
  throw std::out_of_range("no cell " + variant + "/" + std::string(condition_name(c)));
}

std::vector<Variant> tune_recovery_variants(const nn::Model<Real>& base, const SplitSpec& split,
                                            std::vector<Variant> variants, const OnlineGrid& grid,
                                            std::uint64_t seed) {
  const Session validation = build_validation_recovery_session(split, seed);
  // k stays at 7 while tuning; variants that differ only in k share a result
  std::map<std::pair<ReuseScope, AdaptScope>, AdaptConfig> tuned;
  for (auto& v : variants) {
    const auto key = std::make_pair(v.config.reuse, v.config.adapt);
    if (!tuned.contains(key)) {
      AdaptConfig at7 = v.config;
      at7.k = kTuningEnsemble;
      const TuneResult t = tune_online(base, std::span<const Session>(&validation, 1), grid, at7);
      log_info("tuned ", v.name, ": ", adapt_config_to_json(t.best).dump(), " (validation ",
               percent(t.best_accuracy), "%)");
      tuned.emplace(key, t.best);
    }
    const int k = v.config.k;
    v.config = tuned.at(key);
    v.config.k = k;
  }
  return variants;
}

RecoveryReport run_recovery_benchmark(const nn::Model<Real>& base, const SplitSpec& split,
                                      std::span<const Variant> variants,
                                      const RecoveryOptions& options) {
  RecoveryReport report;
  report.variants.assign(variants.begin(), variants.end());
  std::vector<std::vector<Session>> per_condition;
  for (auto c : options.conditions) {
    auto sessions = build_recovery_sessions(split, c, options.seed);
    if (options.max_sessions > 0 && sessions.size() > options.max_sessions) {
      sessions.resize(options.max_sessions);
    }
    per_condition.push_back(std::move(sessions));
  }
  for (const auto& v : variants) {
    for (std::size_t ci = 0; ci < options.conditions.size(); ++ci) {
      RecoveryCell cell;
      cell.variant = v.name;
      cell.condition = options.conditions[ci];
      const auto results = replay_sessions(base, v.config, per_condition[ci], options.threads);
      for (const auto& r : results) {
        cell.session_ids.push_back(r.session_id);
        cell.accuracies.push_back(r.accuracy);
        cell.mean += r.accuracy;
      }
      if (!results.empty()) cell.mean /= static_cast<double>(results.size());
      log_info(v.name, " ", condition_name(cell.condition), ": ", percent(cell.mean), "% over ",
               results.size(), " sessions");
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

json recovery_report_to_json(const RecoveryReport& r) {
  json variants = json::array();
  for (const auto& v : r.variants) {
    variants.push_back({{"name", v.name}, {"config", adapt_config_to_json(v.config)}});
  }
  json cells = json::array();
  for (const auto& c : r.cells) {
    json sessions = json::array();
    for (std::size_t i = 0; i < c.accuracies.size(); ++i) {
      sessions.push_back({{"id", c.session_ids[i]}, {"accuracy", c.accuracies[i]}});
    }
    cells.push_back({{"variant", c.variant},
                     {"condition", condition_name(c.condition)},
                     {"mean", c.mean},
                     {"sessions", sessions}});
  }
  return {{"variants", variants}, {"cells", cells}};
}

std::string recovery_table(const RecoveryReport& r) {
  std::vector<RecoveryCondition> conditions;
  for (const auto& c : r.cells) {
    if (std::find(conditions.begin(), conditions.end(), c.condition) == conditions.end()) {
      conditions.push_back(c.condition);
    }
  }
  std::ostringstream os;
  os << std::left << std::setw(10) << "variant";
  for (auto c : conditions) os << std::right << std::setw(8) << condition_name(c);
  os << '\n';
  for (const auto& v : r.variants) {
    os << std::left << std::setw(10) << v.name;
    for (auto c : conditions) os << std::right << std::setw(8) << percent(r.cell(v.name, c).mean);
    os << '\n';
  }
  return os.str();
}

std::vector<Variant> human_variants() {
  std::vector<Variant> out;
  const std::pair<ReuseScope, char> reuse[] = {
      {ReuseScope::all, 'a'}, {ReuseScope::dec, 'b'}, {ReuseScope::none, 'c'}};
  const std::pair<AdaptScope, char> adapt[] = {
      {AdaptScope::embeddings, '1'}, {AdaptScope::encoder, '2'}, {AdaptScope::all, '3'}};
  for (auto [r, rn] : reuse) {
    for (auto [a, an] : adapt) {
      AdaptConfig c;
      c.reuse = r;
      c.adapt = a;
      try {
        c.validate();
      } catch (const std::invalid_argument&) {
        continue;
      }
      out.push_back({std::string{rn} + "-" + an, c});
    }
  }
  return out;
}

ResultsMatrix run_human_benchmark(const nn::Model<Real>& base, std::span<const Session> sessions,
                                  std::span<const Variant> variants, const HumanOptions& options) {
  if (sessions.size() <= options.validation_sessions) {
    throw std::invalid_argument("need more sessions than the " +
                                std::to_string(options.validation_sessions) + " used for tuning");
  }
  const auto validation = sessions.first(options.validation_sessions);
  const auto test = sessions.subspan(options.validation_sessions);
  const bool have_external = std::all_of(test.begin(), test.end(), [](const Session& s) {
    return s.external_accuracy.has_value();
  });

  ResultsMatrix m;
  m.validation_sessions = validation.size();
  for (const auto& v : variants) {
    MatrixCell cell;
    cell.variant = v;
    if (options.tune && !validation.empty()) {
      cell.variant.config = tune_online(base, validation, options.grid, v.config).best;
    }
    const auto results = replay_sessions(base, cell.variant.config, test, options.threads);
    std::vector<double> external;
    for (std::size_t i = 0; i < results.size(); ++i) {
      cell.session_ids.push_back(results[i].session_id);
      cell.accuracies.push_back(results[i].accuracy);
      cell.mean += results[i].accuracy;
      if (have_external) external.push_back(*test[i].external_accuracy);
    }
    cell.mean /= static_cast<double>(results.size());
    if (have_external) {
      try {
        cell.r = pearson(cell.accuracies, external);
      } catch (const std::invalid_argument& e) {
        log_info("warning: no correlation for ", v.name, ": ", e.what());
      }
    }
    log_info(v.name, ": ", percent(cell.mean), "% over ", results.size(), " sessions");
    m.cells.push_back(std::move(cell));
  }
  return m;
}

json results_matrix_to_json(const ResultsMatrix& m) {
  json cells = json::array();
  for (const auto& c : m.cells) {
    json sessions = json::array();
    for (std::size_t i = 0; i < c.accuracies.size(); ++i) {
      sessions.push_back({{"id", c.session_ids[i]}, {"accuracy", c.accuracies[i]}});
    }
    cells.push_back({{"variant", c.variant.name},
                     {"reuse", reuse_name(c.variant.config.reuse)},
                     {"adapt", adapt_name(c.variant.config.adapt)},
                     {"config", adapt_config_to_json(c.variant.config)},
                     {"mean", c.mean},
                     {"r", c.r ? json(*c.r) : json(nullptr)},
                     {"sessions", sessions}});
  }
  return {{"validation_sessions", m.validation_sessions}, {"cells", cells}};
}

std::string results_table(const ResultsMatrix& m) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "cell" << std::setw(6) << "reuse" << std::setw(12) << "adapt"
     << std::right << std::setw(8) << "acc" << std::setw(8) << "r" << std::setw(6) << "n" << '\n';
  for (const auto& c : m.cells) {
    os << std::left << std::setw(8) << c.variant.name << std::setw(6)
       << reuse_name(c.variant.config.reuse) << std::setw(12) << adapt_name(c.variant.config.adapt)
       << std::right << std::setw(8) << percent(c.mean) << std::setw(8);
    if (c.r) {
      std::ostringstream r;
      r << std::fixed << std::setprecision(2) << *c.r;
      os << r.str();
    } else {
      os << "-";
    }
    os << std::setw(6) << c.accuracies.size() << '\n';
  }
  return os.str();
}

double run_scramble_control(const nn::Model<Real>& scrambled, std::span<const Session> sessions,
                            std::optional<AdaptConfig> config, unsigned threads) {
  if (sessions.empty()) throw std::invalid_argument("no sessions to replay");
  AdaptConfig c;
  c.reuse = ReuseScope::dec;
  c.adapt = AdaptScope::encoder;
  if (config) c = *config;
  double total = 0;
  for (const auto& r : replay_sessions(scrambled, c, sessions, threads)) total += r.accuracy;
  return total / static_cast<double>(sessions.size());
}

EmbeddingTable embedding_table(const nn::Model<Real>& model) {
  EmbeddingTable t;
  const auto& vocab = model.vocab();
  t.words = vocab.words();
  t.base_size = static_cast<std::size_t>(vocab.base_size());
  for (const auto& w : t.words) {
    const auto v = model.word_embedding(w);
    t.vectors.emplace_back(v.data(), v.data() + v.size());
  }
  return t;
}

json embedding_table_to_json(const EmbeddingTable& t) {
  return {{"words", t.words}, {"base_size", t.base_size}, {"vectors", t.vectors}};
}

EmbeddingTable embedding_table_from_json(const json& j) {
  EmbeddingTable t;
  t.words = j.at("words").get<std::vector<std::string>>();
  t.base_size = j.at("base_size").get<std::size_t>();
  t.vectors = j.at("vectors").get<std::vector<std::vector<double>>>();
  if (t.vectors.size() != t.words.size() || t.base_size > t.words.size()) {
    throw FormatError("inconsistent embedding table");
  }
  return t;
}

std::vector<SimilarityRow> embedding_similarity_report(const EmbeddingTable& table,
                                                       std::span<const std::string> probes) {
  auto index_of = [&](const std::string& w) {
    auto it = std::find(table.words.begin(), table.words.end(), w);
    if (it == table.words.end()) throw std::invalid_argument("unknown probe word '" + w + "'");
    return static_cast<std::size_t>(it - table.words.begin());
  };
  std::vector<SimilarityRow> rows;
  for (const auto& probe : probes) {
    const auto& u = table.vectors[index_of(probe)];
    SimilarityRow row{probe, {}};
    for (std::size_t i = 0; i < table.base_size; ++i) {
      row.ranked.emplace_back(table.words[i], nn::cosine(u, table.vectors[i]));
    }
    std::stable_sort(row.ranked.begin(), row.ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string similarity_table(std::span<const SimilarityRow> rows, std::size_t top) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  for (const auto& row : rows) {
    os << row.probe << ':';
    for (std::size_t i = 0; i < std::min(top, row.ranked.size()); ++i) {
      os << ' ' << row.ranked[i].first << '=' << row.ranked[i].second;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace shrdlurn
