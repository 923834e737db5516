#include "shrdlurn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <ostream>
#include <unordered_set>

#include "shrdlurn/log.hpp"
#include "shrdlurn/nn/checkpoint.hpp"

namespace shrdlurn {

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"model", nn::config_to_json(c.model)},
          {"arch", c.model.arch()},
          {"optimizer", nn::optimizer_name(c.optimizer)},
          {"lr", c.lr},
          {"batch", c.batch},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"eval_every", c.eval_every},
          {"seed", c.seed},
          {"train_limit", c.train_limit},
          {"val_limit", c.val_limit},
          {"time_budget_s", c.time_budget_s}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("model")) c.model = nn::config_from_json(j.at("model"));
  if (j.contains("optimizer")) c.optimizer = nn::parse_optimizer(j.at("optimizer").get<std::string>());
  c.lr = j.value("lr", c.lr);
  c.batch = j.value("batch", c.batch);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.seed = j.value("seed", c.seed);
  c.train_limit = j.value("train_limit", c.train_limit);
  c.val_limit = j.value("val_limit", c.val_limit);
  c.time_budget_s = j.value("time_budget_s", c.time_budget_s);
  return c;
}

nn::Vocabulary build_vocabulary(const Dataset& train) {
  nn::Vocabulary v;
  for (const auto& ex : train.examples) {
    for (const auto& w : ex.utterance) v.add(w);
  }
  for (const auto& w : grammar_vocabulary()) v.add(w);
  v.freeze();
  return v;
}

void audit_splits(const Dataset& train, const Dataset& other) {
  std::unordered_set<std::string> utts, cols;
  for (const auto& ex : train.examples) {
    utts.insert(join_tokens(ex.utterance));
    for (const auto& p : ex.start.piles) cols.insert(pile_key(p));
  }
  for (const auto& ex : other.examples) {
    const std::string u = join_tokens(ex.utterance);
    if (utts.count(u)) throw LeakageError("utterance '" + u + "' occurs in both splits");
    for (const auto& p : ex.start.piles) {
      if (cols.count(pile_key(p))) {
        throw LeakageError("column " + pile_key(p) + " occurs in both splits");
      }
    }
  }
}

EvalReport score(std::span<const nn::Prediction> predictions, std::span<const ExampleTriple> gold) {
  if (predictions.size() != gold.size()) throw std::invalid_argument("prediction count mismatch");
  EvalReport r;
  r.n = gold.size();
  if (r.n == 0) return r;
  std::size_t exact = 0, tokens = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto target = state_token_ids(gold[i].target);
    int hits = 0;
    for (int t = 0; t < kStateLength; ++t) hits += predictions[i].tokens[t] == target[t];
    tokens += static_cast<std::size_t>(hits);
    exact += hits == kStateLength;
  }
  r.exact_match = static_cast<double>(exact) / static_cast<double>(r.n);
  r.token_accuracy = static_cast<double>(tokens) / static_cast<double>(r.n * kStateLength);
  return r;
}

template <typename T>
EvalReport evaluate(const nn::Model<T>& model, const Dataset& ds) {
  std::vector<nn::EncodedExample> enc;
  enc.reserve(ds.examples.size());
  for (const auto& ex : ds.examples) enc.push_back(model.encode_example(ex));
  const auto preds = model.predict_batch(enc);
  return score(preds, ds.examples);
}

template EvalReport evaluate<float>(const nn::Model<float>&, const Dataset&);
template EvalReport evaluate<double>(const nn::Model<double>&, const Dataset&);

namespace {

Dataset head(const Dataset& ds, std::size_t limit) {
  if (limit == 0 || limit >= ds.examples.size()) return ds;
  Dataset out;
  out.tag = ds.tag;
  out.examples.assign(ds.examples.begin(), ds.examples.begin() + static_cast<std::ptrdiff_t>(limit));
  return out;
}

// Shuffled batches whose utterances share one length.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<nn::EncodedExample>& data,
                                                   int batch, Rng& rng) {
  std::map<std::size_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < data.size(); ++i) buckets[data[i].utterance.size()].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [len, idx] : buckets) {
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t s = 0; s < idx.size(); s += static_cast<std::size_t>(batch)) {
      const auto e = std::min(idx.size(), s + static_cast<std::size_t>(batch));
      out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(s),
                       idx.begin() + static_cast<std::ptrdiff_t>(e));
    }
  }
  rng.shuffle(std::span<std::vector<std::size_t>>(out));
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& train_full, const Dataset& val_full,
                  const CurveCallback& on_eval) {
  if (config.batch < 1) throw std::invalid_argument("batch size must be positive");
  if (config.patience < 1) throw std::invalid_argument("patience must be positive");
  const Dataset train_set = head(train_full, config.train_limit);
  const Dataset val_set = head(val_full, config.val_limit);
  if (train_set.examples.empty()) throw std::invalid_argument("empty training set");
  audit_splits(train_set, val_set);

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  nn::Model<Real> model(config.model, build_vocabulary(train_set),
                        derive_seed(config.seed, fnv1a("init")));
  std::vector<nn::EncodedExample> data;
  data.reserve(train_set.examples.size());
  for (const auto& ex : train_set.examples) data.push_back(model.encode_example(ex));

  auto optimizer = nn::make_optimizer<Real>(config.optimizer, config.lr);
  Rng dropout_rng(derive_seed(config.seed, fnv1a("dropout")));

  TrainResult result{model, {}, -1.0, 0, 0, 0};
  int stale = 0;
  long step = 0;
  double loss_sum = 0;
  long loss_count = 0;
  bool stop = false;

  auto evaluate_now = [&](int epoch) {
    const EvalReport r = evaluate(model, val_set);
    CurvePoint pt{step, epoch, loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0,
                  r.exact_match, r.token_accuracy};
    loss_sum = 0;
    loss_count = 0;
    result.curve.push_back(pt);
    if (on_eval) on_eval(pt);
    log_info(config.model.arch(), " step ", step, " epoch ", epoch, " loss ", pt.train_loss,
             " val exact ", pt.val_exact, " token ", pt.val_token);
    if (r.exact_match > result.best_val) {
      result.best_val = r.exact_match;
      result.best_step = step;
      result.model = model;
      stale = 0;
    } else if (++stale >= config.patience) {
      stop = true;
    }
    if (config.time_budget_s > 0 && elapsed() > config.time_budget_s) stop = true;
  };

  for (int epoch = 1; epoch <= config.max_epochs && !stop; ++epoch) {
    Rng order_rng(derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    for (const auto& idx : make_batches(data, config.batch, order_rng)) {
      std::vector<const nn::EncodedExample*> batch;
      batch.reserve(idx.size());
      for (std::size_t i : idx) batch.push_back(&data[i]);
      double loss;
      try {
        loss = model.compute_gradients(batch, Real(0), config.model.dropout > 0 ? &dropout_rng : nullptr);
      } catch (const nn::NumericError& e) {
        throw DivergenceError(std::string("training diverged: ") + e.what());
      }
      optimizer->step(model.params());
      loss_sum += loss;
      ++loss_count;
      ++step;
      if (config.eval_every > 0 && step % config.eval_every == 0) {
        evaluate_now(epoch);
        if (stop) break;
      }
    }
    if (config.eval_every == 0 && !stop) evaluate_now(epoch);
  }
  if (result.curve.empty() || result.curve.back().step != step) {
    stop = false;
    evaluate_now(config.max_epochs);
  }
  result.steps = step;
  result.seconds = elapsed();
  return result;
}

SweepGrid sweep_grid_from_json(const nlohmann::json& j) {
  SweepGrid g;
  if (j.contains("archs")) g.archs = j.at("archs").get<std::vector<std::string>>();
  if (j.contains("lstm_layers")) g.lstm_layers = j.at("lstm_layers").get<std::vector<int>>();
  if (j.contains("conv_layers")) g.conv_layers = j.at("conv_layers").get<std::vector<int>>();
  if (j.contains("hidden")) g.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("dropout")) g.dropout = j.at("dropout").get<std::vector<double>>();
  if (j.contains("seeds")) g.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("base")) g.base = train_config_from_json(j.at("base"));
  return g;
}

std::vector<TrainConfig> expand_grid(const SweepGrid& grid) {
  std::vector<TrainConfig> out;
  for (const auto& arch : grid.archs) {
    const auto [enc, dec] = nn::parse_arch(arch);
    const bool uses_lstm = enc == nn::EncoderKind::lstm || dec == nn::DecoderKind::lstm;
    const bool uses_conv = enc == nn::EncoderKind::conv || dec == nn::DecoderKind::conv;
    const std::vector<int> lstm = uses_lstm ? grid.lstm_layers : std::vector<int>{grid.base.model.lstm_layers};
    const std::vector<int> conv = uses_conv ? grid.conv_layers : std::vector<int>{grid.base.model.conv_layers};
    for (int ll : lstm) {
      for (int cl : conv) {
        for (int h : grid.hidden) {
          for (double d : grid.dropout) {
            for (auto seed : grid.seeds) {
              TrainConfig c = grid.base;
              c.model.encoder = enc;
              c.model.decoder = dec;
              c.model.lstm_layers = ll;
              c.model.conv_layers = cl;
              c.model.hidden = h;
              c.model.dropout = d;
              c.seed = seed;
              out.push_back(c);
            }
          }
        }
      }
    }
  }
  return out;
}

nlohmann::json sweep_row_to_json(const SweepRow& r) {
  return {{"config", train_config_to_json(r.config)},
          {"arch", r.config.model.arch()},
          {"val_exact", r.val_exact},
          {"val_token", r.val_token},
          {"best_step", r.best_step},
          {"seconds", r.seconds}};
}

SweepResult sweep(const SweepGrid& grid, std::size_t budget, const Dataset& train_set,
                  const Dataset& val_set, std::ostream* ledger) {
  auto configs = expand_grid(grid);
  if (budget > 0 && budget < configs.size()) configs.resize(budget);
  SweepResult out;
  std::map<std::string, std::size_t> best;
  for (const auto& c : configs) {
    const TrainResult r = train(c, train_set, val_set);
    const CurvePoint& bp = *std::find_if(r.curve.begin(), r.curve.end(),
                                         [&](const CurvePoint& p) { return p.step == r.best_step; });
    SweepRow row{c, r.best_val, bp.val_token, r.best_step, r.seconds};
    if (ledger) *ledger << sweep_row_to_json(row).dump() << '\n' << std::flush;
    out.leaderboard.push_back(row);
    const std::string arch = c.model.arch();
    const auto it = best.find(arch);
    if (it == best.end() || row.val_exact > out.leaderboard[it->second].val_exact) {
      best[arch] = out.leaderboard.size() - 1;
    }
  }
  for (const auto& [arch, i] : best) out.best_per_arch.push_back(out.leaderboard[i]);
  std::stable_sort(out.best_per_arch.begin(), out.best_per_arch.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.val_exact > b.val_exact; });
  return out;
}

}  // namespace shrdlurn
