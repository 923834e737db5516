#include "shrdlurn/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "shrdlurn/log.hpp"

namespace shrdlurn {

std::string_view reuse_name(ReuseScope r) {
  switch (r) {
    case ReuseScope::all: return "all";
    case ReuseScope::dec: return "dec";
    case ReuseScope::none: return "none";
  }
  return "";
}

std::string_view adapt_name(AdaptScope a) {
  switch (a) {
    case AdaptScope::newwords: return "newwords";
    case AdaptScope::embeddings: return "embeddings";
    case AdaptScope::encoder: return "encoder";
    case AdaptScope::all: return "all";
  }
  return "";
}

std::string_view selection_name(Selection s) { return s == Selection::greedy ? "greedy" : "1out"; }

ReuseScope parse_reuse(std::string_view s) {
  if (s == "all" || s == "enc+dec") return ReuseScope::all;
  if (s == "dec") return ReuseScope::dec;
  if (s == "none") return ReuseScope::none;
  throw std::invalid_argument("unknown reuse scope '" + std::string(s) + "'");
}

AdaptScope parse_adapt(std::string_view s) {
  if (s == "newwords") return AdaptScope::newwords;
  if (s == "embeddings") return AdaptScope::embeddings;
  if (s == "encoder") return AdaptScope::encoder;
  if (s == "all" || s == "enc+dec") return AdaptScope::all;
  throw std::invalid_argument("unknown adapt scope '" + std::string(s) + "'");
}

Selection parse_selection(std::string_view s) {
  if (s == "greedy") return Selection::greedy;
  if (s == "1out" || s == "1-out" || s == "one_out") return Selection::one_out;
  throw std::invalid_argument("unknown selection strategy '" + std::string(s) + "'");
}

void AdaptConfig::validate() const {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (steps < 0) throw std::invalid_argument("steps must be non-negative");
  if (!(lr >= 0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be >= 0");
  if (!(l2 >= 0) || !std::isfinite(l2)) throw std::invalid_argument("l2 weight must be >= 0");
  if (reuse == ReuseScope::none && adapt != AdaptScope::all) {
    throw std::invalid_argument("reuse=none reinitializes the decoder, so adapt must be all");
  }
  if (reuse == ReuseScope::dec && adapt != AdaptScope::encoder && adapt != AdaptScope::all) {
    throw std::invalid_argument("reuse=dec reinitializes the encoder, so adapt must be encoder or all");
  }
}

nlohmann::json adapt_config_to_json(const AdaptConfig& c) {
  return {{"reuse", reuse_name(c.reuse)},
          {"adapt", adapt_name(c.adapt)},
          {"k", c.k},
          {"steps", c.steps},
          {"optimizer", nn::optimizer_name(c.optimizer)},
          {"lr", c.lr},
          {"l2", c.l2},
          {"selection", selection_name(c.selection)},
          {"seed", c.seed}};
}

AdaptConfig adapt_config_from_json(const nlohmann::json& j, AdaptConfig c) {
  if (!j.is_object()) throw std::invalid_argument("configuration must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "reuse") c.reuse = parse_reuse(value.get<std::string>());
    else if (key == "adapt") c.adapt = parse_adapt(value.get<std::string>());
    else if (key == "k") c.k = value.get<int>();
    else if (key == "steps") c.steps = value.get<int>();
    else if (key == "optimizer") c.optimizer = nn::parse_optimizer(value.get<std::string>());
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "l2") c.l2 = value.get<double>();
    else if (key == "selection") c.selection = parse_selection(value.get<std::string>());
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw std::invalid_argument("unknown configuration key '" + key + "'");
  }
  return c;
}

std::size_t argmin_loss(std::span<const double> losses) {
  std::size_t best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (std::isfinite(losses[i]) && losses[i] < best_loss) {
      best_loss = losses[i];
      best = i;
    }
  }
  return best;
}

nlohmann::json record_to_json(const InteractionRecord& r) {
  auto tokens = [](const std::array<int, kStateLength>& ids) {
    std::vector<std::string> out;
    for (int id : ids) out.emplace_back(state_token_text(static_cast<StateToken>(id)));
    return out;
  };
  nlohmann::json losses = nlohmann::json::array();
  for (double l : r.losses) {
    if (std::isfinite(l)) losses.push_back(l);
    else losses.push_back(nullptr);
  }
  return {{"utterance", r.utterance},
          {"predicted", tokens(r.predicted)},
          {"target", tokens(r.target)},
          {"correct", r.correct},
          {"selected_model", r.selected},
          {"losses", losses}};
}

AdaptSession::AdaptSession(const nn::Model<Real>& base, const AdaptConfig& config)
    : config_(config) {
  config_.validate();
  const auto k = static_cast<std::size_t>(config_.k);
  copies_.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    nn::Model<Real> m = base;
    const std::uint64_t s = derive_seed(config_.seed, 1 + i);
    if (config_.reuse != ReuseScope::all) m.reinitialize(nn::Component::encoder, derive_seed(s, 1));
    if (config_.reuse == ReuseScope::none) m.reinitialize(nn::Component::decoder, derive_seed(s, 2));
    apply_scope(m);
    copies_.push_back(std::move(m));
    optimizers_.push_back(nn::make_optimizer<Real>(config_.optimizer, config_.lr));
    sample_rngs_.emplace_back(derive_seed(s, 3));
  }
  quarantined_.assign(k, 0);
  latest_losses_.assign(k, 0.0);
}

void AdaptSession::apply_scope(nn::Model<Real>& m) const {
  const AdaptScope scope = config_.adapt;
  auto& store = m.params();
  store.set_trainable([&](const nn::Parameter<Real>& p) {
    switch (scope) {
      case AdaptScope::newwords:
      case AdaptScope::embeddings: return p.name == "enc.embed";
      case AdaptScope::encoder: return p.component == nn::Component::encoder;
      case AdaptScope::all: return true;
    }
    return false;
  });
  auto& table = store[m.word_embedding_param()];
  table.column_mask.clear();
  if (scope == AdaptScope::newwords) {
    const int cols = static_cast<int>(table.value.cols());
    table.column_mask.resize(static_cast<std::size_t>(cols));
    for (int c = 0; c < cols; ++c) table.column_mask[static_cast<std::size_t>(c)] = m.vocab().is_new(c);
  }
}

void AdaptSession::register_words(const Utterance& u) {
  std::vector<std::string> fresh;
  for (const auto& w : u) {
    if (!copies_.front().vocab().find(w) &&
        std::find(fresh.begin(), fresh.end(), w) == fresh.end()) {
      fresh.push_back(w);
    }
  }
  if (fresh.empty()) return;
  for (std::size_t i = 0; i < copies_.size(); ++i) {
    copies_[i].register_new_words(fresh, derive_seed(config_.seed, 1 + i));
    if (config_.adapt == AdaptScope::newwords) {
      auto& table = copies_[i].params()[copies_[i].word_embedding_param()];
      for (const auto& w : fresh) {
        table.column_mask[static_cast<std::size_t>(copies_[i].vocab().id(w))] = 1;
      }
    }
  }
}

std::vector<double> AdaptSession::selection_losses() const {
  std::vector<double> out(copies_.size(), 0.0);
  if (encoded_.empty()) return out;
  std::span<const nn::EncodedExample> va(encoded_);
  if (config_.selection == Selection::one_out && encoded_.size() > 1) va = va.last(1);
  for (std::size_t i = 0; i < copies_.size(); ++i) {
    double total = 0;
    for (double l : copies_[i].example_losses(va)) total += l;
    out[i] = std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
  }
  return out;
}

int AdaptSession::select_model() const {
  return static_cast<int>(argmin_loss(selection_losses()));
}

PredictOutcome AdaptSession::predict(const Utterance& utterance, const WorldState& start) {
  if (pending_) throw std::logic_error("a prediction is already waiting for feedback");
  if (utterance.empty()) throw std::invalid_argument("empty utterance");
  register_words(utterance);
  PredictOutcome out;
  out.losses = selection_losses();
  out.selected = static_cast<int>(argmin_loss(out.losses));
  out.tokens = copies_[static_cast<std::size_t>(out.selected)].predict(utterance, start).tokens;
  latest_losses_ = out.losses;
  pending_ = Pending{utterance, start, out};
  return out;
}

InteractionRecord AdaptSession::feedback(const WorldState& target) {
  if (!pending_) throw std::logic_error("no prediction is waiting for feedback");
  Pending p = std::move(*pending_);
  pending_.reset();
  InteractionRecord rec;
  rec.utterance = p.utterance;
  rec.predicted = p.outcome.tokens;
  rec.target = state_token_ids(target);
  rec.correct = rec.predicted == rec.target;
  rec.selected = p.outcome.selected;
  rec.losses = p.outcome.losses;
  log_.push_back(rec);

  ExampleTriple ex{p.utterance, p.start, target};
  encoded_.push_back(copies_.front().encode_example(ex));
  buffer_.push_back(std::move(ex));
  train_copies();
  return rec;
}

InteractionRecord AdaptSession::interact(const ExampleTriple& ex) {
  predict(ex.utterance, ex.start);
  return feedback(ex.target);
}

void AdaptSession::train_copies() {
  if (config_.steps == 0 || encoded_.empty()) return;
  std::size_t n_train = encoded_.size();
  if (config_.selection == Selection::one_out && encoded_.size() > 1) n_train -= 1;
  const Real l2 = static_cast<Real>(config_.l2);
  for (std::size_t i = 0; i < copies_.size(); ++i) {
    if (quarantined_[i]) continue;
    auto& model = copies_[i];
    if (!model.params().any_trainable()) continue;
    try {
      for (int s = 0; s < config_.steps; ++s) {
        const nn::EncodedExample* ex = &encoded_[sample_rngs_[i].index(n_train)];
        model.compute_gradients(std::span(&ex, 1), l2, nullptr);
        optimizers_[i]->step(model.params());
      }
    } catch (const nn::NumericError& e) {
      quarantined_[i] = 1;
      log_debug("copy ", i, " quarantined: ", e.what());
    }
  }
}

double online_accuracy(std::span<const InteractionRecord> log) {
  if (log.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : log) hits += r.correct;
  return static_cast<double>(hits) / static_cast<double>(log.size());
}

double AdaptSession::online_accuracy() const { return shrdlurn::online_accuracy(log_); }

nlohmann::json session_result_to_json(const SessionResult& r, const AdaptConfig& config) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& rec : r.log) steps.push_back(record_to_json(rec));
  return {{"session", r.session_id},
          {"config", adapt_config_to_json(config)},
          {"steps", steps},
          {"summary", {{"online_accuracy", r.accuracy}, {"interactions", r.log.size()}}}};
}

SessionResult run_session(const nn::Model<Real>& base, const AdaptConfig& config,
                          const Session& session) {
  if (session.examples.empty()) throw std::invalid_argument("session has no examples");
  AdaptSession s(base, config);
  for (const auto& ex : session.examples) s.interact(ex);
  return {session.id, s.online_accuracy(), s.log()};
}

OnlineGrid online_grid_from_json(const nlohmann::json& j) {
  OnlineGrid g;
  if (j.contains("optimizers")) {
    g.optimizers.clear();
    for (const auto& s : j.at("optimizers")) g.optimizers.push_back(nn::parse_optimizer(s.get<std::string>()));
  }
  if (j.contains("steps")) g.steps = j.at("steps").get<std::vector<int>>();
  if (j.contains("l2")) g.l2 = j.at("l2").get<std::vector<double>>();
  if (j.contains("lr")) g.lr = j.at("lr").get<std::vector<double>>();
  if (j.contains("selection")) {
    g.selection.clear();
    for (const auto& s : j.at("selection")) g.selection.push_back(parse_selection(s.get<std::string>()));
  }
  return g;
}

std::vector<AdaptConfig> expand_online_grid(const OnlineGrid& grid, const AdaptConfig& base) {
  std::vector<AdaptConfig> out;
  for (auto opt : grid.optimizers) {
    for (int steps : grid.steps) {
      for (double l2 : grid.l2) {
        for (double lr : grid.lr) {
          for (auto sel : grid.selection) {
            AdaptConfig c = base;
            c.optimizer = opt;
            c.steps = steps;
            c.l2 = l2;
            c.lr = lr;
            c.selection = sel;
            out.push_back(c);
          }
        }
      }
    }
  }
  return out;
}

TuneResult tune_online(const nn::Model<Real>& base, std::span<const Session> sessions,
                       const OnlineGrid& grid, const AdaptConfig& base_config) {
  if (sessions.empty()) throw std::invalid_argument("tuning needs at least one session");
  TuneResult out;
  for (const auto& c : expand_online_grid(grid, base_config)) {
    double total = 0;
    for (const auto& s : sessions) total += run_session(base, c, s).accuracy;
    const double mean = total / static_cast<double>(sessions.size());
    out.rows.push_back({c, mean});
    log_debug("tune ", adapt_config_to_json(c).dump(), " -> ", mean);
    if (mean > out.best_accuracy) {
      out.best_accuracy = mean;
      out.best = c;
    }
  }
  return out;
}

}  // namespace shrdlurn
