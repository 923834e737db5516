// Command-line front end: data generation, offline training, online
// adaptation, benchmarks and the HTTP server.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "shrdlurn/experiments.hpp"
#include "shrdlurn/log.hpp"
#include "shrdlurn/nn/checkpoint.hpp"
#include "shrdlurn/service.hpp"
#include "shrdlurn/trainer.hpp"

// After Eigen: resolv.h defines _res, an Eigen parameter name.
#include "httplib.h"

using namespace shrdlurn;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return json::parse(in);
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Datasets either come from a `gen` directory or are generated in memory.
struct DataSource {
  std::string dir;
  std::uint64_t seed = 1;
  std::size_t train = 42000, val = 4000, test = 4000;
  std::uint64_t scramble = 0;  // nonzero: scramble the language with this seed

  void add_options(CLI::App* app) {
    app->add_option("--data", dir, "directory written by `gen`");
    app->add_option("--data-seed", seed, "split seed when generating in memory");
    app->add_option("--n-train", train);
    app->add_option("--n-val", val);
    app->add_option("--n-test", test);
    app->add_option("--scramble", scramble, "train on a scrambled language (seed)");
  }

  std::array<Dataset, 3> load() const {
    std::array<Dataset, 3> ds;
    if (!dir.empty()) {
      ds = {load_dataset((fs::path(dir) / "train.tsv").string()),
            load_dataset((fs::path(dir) / "val.tsv").string()),
            load_dataset((fs::path(dir) / "test.tsv").string())};
    } else {
      ds = generate(make_split(seed), {train, val, test});
    }
    if (scramble != 0) {
      for (auto& d : ds) d = scramble_language(d, scramble);
    }
    return ds;
  }
};

AdaptConfig adapt_options_to_config(const json& overrides, const std::string& config_file) {
  AdaptConfig c;
  if (!config_file.empty()) c = adapt_config_from_json(read_json(config_file));
  c = adapt_config_from_json(overrides, c);
  c.validate();
  return c;
}

volatile std::sig_atomic_t g_stop = 0;
httplib::Server* g_server = nullptr;

void on_signal(int) {
  g_stop = 1;
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online adaptation of neural blocks-world interpreters"};
  app.require_subcommand(1);
  bool quiet = false, verbose = false;
  app.add_flag("-q,--quiet", quiet);
  app.add_flag("-v,--verbose", verbose);

  // gen
  auto* gen = app.add_subcommand("gen", "generate split and datasets");
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  DatasetCounts counts;
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--n-train", counts.train);
  gen->add_option("--n-val", counts.val);
  gen->add_option("--n-test", counts.test);

  // train
  auto* train_cmd = app.add_subcommand("train", "train one model offline");
  DataSource train_data;
  train_data.add_options(train_cmd);
  std::string train_config_file, train_out, train_curve, train_arch;
  TrainConfig tc;
  int hidden = -1, lstm_layers = -1, conv_layers = -1, epochs = -1;
  double dropout = -1;
  std::size_t train_limit = 0;
  train_cmd->add_option("--config", train_config_file, "training configuration JSON");
  train_cmd->add_option("--arch", train_arch, "seq2seq|seq2conv|conv2seq|conv2conv|bow2seq");
  train_cmd->add_option("--hidden", hidden);
  train_cmd->add_option("--lstm-layers", lstm_layers);
  train_cmd->add_option("--conv-layers", conv_layers);
  train_cmd->add_option("--dropout", dropout);
  train_cmd->add_option("--epochs", epochs);
  train_cmd->add_option("--train-limit", train_limit);
  train_cmd->add_option("--seed", tc.seed);
  train_cmd->add_option("--out", train_out)->required();
  train_cmd->add_option("--curve", train_curve, "learning curve JSON lines");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "grid search over architectures");
  DataSource sweep_data;
  sweep_data.add_options(sweep_cmd);
  std::string grid_file, sweep_ledger, sweep_out;
  std::size_t budget = 0;
  sweep_cmd->add_option("--grid", grid_file, "grid JSON");
  sweep_cmd->add_option("--budget", budget, "maximum configurations (0 = all)");
  sweep_cmd->add_option("--ledger", sweep_ledger, "one JSON line per configuration");
  sweep_cmd->add_option("--out", sweep_out, "summary JSON");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "exact-match accuracy of a checkpoint");
  std::string eval_ckpt, eval_file;
  eval_cmd->add_option("--ckpt", eval_ckpt)->required();
  eval_cmd->add_option("--data", eval_file, "dataset TSV")->required();

  // adapt
  auto* adapt_cmd = app.add_subcommand("adapt", "replay a session with online learning");
  std::string adapt_ckpt, adapt_session, adapt_report, adapt_config_file;
  std::string reuse, adapt_scope, opt, select;
  int k = -1, steps = -1;
  double lr = -1, l2 = -1;
  std::int64_t seed = -1;
  adapt_cmd->add_option("--ckpt", adapt_ckpt)->required();
  adapt_cmd->add_option("--session", adapt_session, "session file")->required();
  adapt_cmd->add_option("--config", adapt_config_file);
  adapt_cmd->add_option("--reuse", reuse)->check(CLI::IsMember({"all", "enc+dec", "dec", "none"}));
  adapt_cmd->add_option("--adapt", adapt_scope)
      ->check(CLI::IsMember({"newwords", "embeddings", "encoder", "all"}));
  adapt_cmd->add_option("--k", k);
  adapt_cmd->add_option("--steps", steps);
  adapt_cmd->add_option("--opt", opt)->check(CLI::IsMember({"sgd", "adam"}));
  adapt_cmd->add_option("--lr", lr);
  adapt_cmd->add_option("--l2", l2);
  adapt_cmd->add_option("--select", select)->check(CLI::IsMember({"greedy", "1out", "1-out"}));
  adapt_cmd->add_option("--seed", seed);
  adapt_cmd->add_option("--report", adapt_report, "report JSON");

  // bench
  auto* bench = app.add_subcommand("bench", "benchmarks");
  bench->require_subcommand(1);
  std::string bench_ckpt, bench_out, bench_sessions, bench_grid;
  std::uint64_t bench_seed = 1;
  std::size_t bench_cap = 0;
  bool no_tune = false;
  auto* bench_rec = bench->add_subcommand("recovery", "word recovery conditions x variants");
  auto* bench_hum = bench->add_subcommand("human", "reuse x adapt matrix on session files");
  auto* bench_scr = bench->add_subcommand("scramble", "scrambled-grammar checkpoint control");
  for (auto* sub : {bench_rec, bench_hum, bench_scr}) {
    sub->add_option("--ckpt", bench_ckpt)->required();
    sub->add_option("--out", bench_out, "report JSON");
  }
  bench_rec->add_option("--split-seed", bench_seed);
  bench_rec->add_option("--max-sessions", bench_cap, "per condition; 0 keeps all");
  for (auto* sub : {bench_rec, bench_hum}) {
    sub->add_option("--grid", bench_grid, "online grid JSON");
    sub->add_flag("--no-tune", no_tune, "use default online hyperparameters");
  }
  bench_hum->add_option("--sessions", bench_sessions)->required();
  bench_scr->add_option("--sessions", bench_sessions)->required();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "analyses of adapted models");
  analyze->require_subcommand(1);
  auto* analyze_emb = analyze->add_subcommand("embeddings", "cosine similarity of word embeddings");
  std::string analyze_report, analyze_words;
  std::size_t analyze_top = 5;
  analyze_emb->add_option("--report", analyze_report, "report written by `adapt`")->required();
  analyze_emb->add_option("--words", analyze_words, "comma-separated probes")->required();
  analyze_emb->add_option("--top", analyze_top);

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP API for live sessions");
  std::string serve_ckpt, serve_defaults, serve_host = "0.0.0.0", cors = "*";
  int port = 8080;
  int idle_s = 3600;
  serve->add_option("--ckpt", serve_ckpt)->required();
  serve->add_option("--port", port);
  serve->add_option("--host", serve_host);
  serve->add_option("--default-config", serve_defaults, "adaptation defaults JSON");
  serve->add_option("--idle-timeout", idle_s, "seconds");
  serve->add_option("--cors-origin", cors);

  // make-sessions
  auto* make = app.add_subcommand("make-sessions", "write synthetic session files");
  std::string make_kind = "recovery", make_out, make_condition = "all";
  std::uint64_t make_seed = 7, make_split_seed = 1;
  std::size_t make_count = 10;
  make->add_option("kind", make_kind)->check(CLI::IsMember({"recovery", "validation", "dialect"}));
  make->add_option("--condition", make_condition)->check(CLI::IsMember({"1", "2", "3", "all"}));
  make->add_option("--count", make_count, "dialect sessions");
  make->add_option("--seed", make_seed);
  make->add_option("--split-seed", make_split_seed);
  make->add_option("--out", make_out)->required();

  CLI11_PARSE(app, argc, argv);
  if (quiet) log_level() = LogLevel::quiet;
  if (verbose) log_level() = LogLevel::debug;

  try {
    if (*gen) {
      const SplitSpec split = make_split(gen_seed);
      const auto ds = generate(split, counts);
      fs::create_directories(gen_out);
      std::ofstream(fs::path(gen_out) / "split.json") << split_to_json(split) << '\n';
      save_dataset((fs::path(gen_out) / "train.tsv").string(), ds[0]);
      save_dataset((fs::path(gen_out) / "val.tsv").string(), ds[1]);
      save_dataset((fs::path(gen_out) / "test.tsv").string(), ds[2]);
      log_info("wrote ", ds[0].examples.size(), "/", ds[1].examples.size(), "/",
               ds[2].examples.size(), " examples to ", gen_out);
    } else if (*train_cmd) {
      if (!train_config_file.empty()) tc = train_config_from_json(read_json(train_config_file));
      if (!train_arch.empty()) std::tie(tc.model.encoder, tc.model.decoder) = nn::parse_arch(train_arch);
      if (hidden > 0) tc.model.hidden = hidden;
      if (lstm_layers > 0) tc.model.lstm_layers = lstm_layers;
      if (conv_layers > 0) tc.model.conv_layers = conv_layers;
      if (dropout >= 0) tc.model.dropout = dropout;
      if (epochs > 0) tc.max_epochs = epochs;
      if (train_limit > 0) tc.train_limit = train_limit;
      const auto ds = train_data.load();
      std::ofstream curve;
      if (!train_curve.empty()) curve.open(train_curve);
      auto result = train(tc, ds[0], ds[1], [&](const CurvePoint& p) {
        log_info("step ", p.step, " epoch ", p.epoch, " loss ", p.train_loss, " val ", p.val_exact);
        if (curve) {
          curve << json{{"step", p.step}, {"epoch", p.epoch}, {"train_loss", p.train_loss},
                        {"val_exact", p.val_exact}, {"val_token", p.val_token}}.dump()
                << '\n';
        }
      });
      nn::save_checkpoint(result.model, train_out);
      const auto test = evaluate(result.model, ds[2]);
      std::cout << json{{"arch", tc.model.arch()},
                        {"best_val", result.best_val},
                        {"best_step", result.best_step},
                        {"test_exact", test.exact_match},
                        {"test_token", test.token_accuracy},
                        {"seconds", result.seconds}}.dump(2)
                << '\n';
    } else if (*sweep_cmd) {
      SweepGrid grid;
      if (!grid_file.empty()) grid = sweep_grid_from_json(read_json(grid_file));
      const auto ds = sweep_data.load();
      std::ofstream ledger;
      if (!sweep_ledger.empty()) ledger.open(sweep_ledger);
      const auto result = sweep(grid, budget, ds[0], ds[1], sweep_ledger.empty() ? nullptr : &ledger);
      json best = json::array();
      for (const auto& row : result.best_per_arch) best.push_back(sweep_row_to_json(row));
      for (const auto& row : result.best_per_arch) {
        std::cout << row.config.model.arch() << '\t' << row.val_exact << '\n';
      }
      if (!sweep_out.empty()) write_json(sweep_out, {{"best_per_arch", best}});
    } else if (*eval_cmd) {
      const auto model = nn::load_checkpoint<Real>(eval_ckpt);
      const auto r = evaluate(model, load_dataset(eval_file));
      std::cout << json{{"exact_match", r.exact_match}, {"token_accuracy", r.token_accuracy},
                        {"n", r.n}}.dump(2)
                << '\n';
    } else if (*adapt_cmd) {
      json overrides = json::object();
      if (!reuse.empty()) overrides["reuse"] = reuse;
      if (!adapt_scope.empty()) overrides["adapt"] = adapt_scope;
      if (k > 0) overrides["k"] = k;
      if (steps >= 0) overrides["steps"] = steps;
      if (!opt.empty()) overrides["optimizer"] = opt;
      if (lr >= 0) overrides["lr"] = lr;
      if (l2 >= 0) overrides["l2"] = l2;
      if (!select.empty()) overrides["selection"] = select;
      if (seed >= 0) overrides["seed"] = static_cast<std::uint64_t>(seed);
      const AdaptConfig config = adapt_options_to_config(overrides, adapt_config_file);
      const auto model = nn::load_checkpoint<Real>(adapt_ckpt);
      const auto sessions = ingest_sessions(adapt_session).sessions;
      json reports = json::array();
      for (const auto& s : sessions) {
        AdaptSession live(model, config);
        for (const auto& ex : s.examples) live.interact(ex);
        SessionResult r{s.id, live.online_accuracy(), live.log()};
        json rep = session_result_to_json(r, config);
        rep["embeddings"] = embedding_table_to_json(embedding_table(live.model(live.select_model())));
        std::cout << s.id << '\t' << r.accuracy << '\n';
        reports.push_back(std::move(rep));
      }
      if (!adapt_report.empty()) {
        write_json(adapt_report, reports.size() == 1 ? reports[0] : reports);
      }
    } else if (*bench) {
      const auto model = nn::load_checkpoint<Real>(bench_ckpt);
      OnlineGrid grid;
      if (!bench_grid.empty()) grid = online_grid_from_json(read_json(bench_grid));
      json report;
      if (*bench_rec) {
        const SplitSpec split = make_split(bench_seed);
        auto variants = recovery_variants();
        if (!no_tune) variants = tune_recovery_variants(model, split, variants, grid);
        RecoveryOptions options;
        options.max_sessions = bench_cap;
        const auto r = run_recovery_benchmark(model, split, variants, options);
        std::cout << recovery_table(r);
        report = recovery_report_to_json(r);
      } else if (*bench_hum) {
        const auto sessions = ingest_sessions(bench_sessions).sessions;
        HumanOptions options;
        options.grid = grid;
        options.tune = !no_tune;
        const auto variants = human_variants();
        const auto m = run_human_benchmark(model, sessions, variants, options);
        std::cout << results_table(m);
        report = results_matrix_to_json(m);
      } else {
        const auto sessions = ingest_sessions(bench_sessions).sessions;
        const double acc = run_scramble_control(model, sessions);
        std::cout << "scramble control: " << acc << '\n';
        report = {{"mean_online_accuracy", acc}, {"sessions", sessions.size()}};
      }
      if (!bench_out.empty()) write_json(bench_out, report);
    } else if (*analyze_emb) {
      json rep = read_json(analyze_report);
      if (rep.is_array()) {
        if (rep.empty()) throw std::runtime_error("empty report");
        rep = rep[0];
      }
      const auto table = embedding_table_from_json(rep.at("embeddings"));
      const auto rows = embedding_similarity_report(table, split_commas(analyze_words));
      std::cout << similarity_table(rows, analyze_top);
    } else if (*serve) {
      auto model = std::make_shared<const nn::Model<Real>>(nn::load_checkpoint<Real>(serve_ckpt));
      AdaptConfig defaults;
      if (!serve_defaults.empty()) defaults = adapt_config_from_json(read_json(serve_defaults));
      SessionManager manager(model, defaults, std::chrono::seconds(idle_s));
      httplib::Server server;
      install_routes(server, manager, cors);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      log_info("listening on ", serve_host, ":", port);
      if (!server.listen(serve_host, port) && !g_stop) {
        throw std::runtime_error("cannot listen on port " + std::to_string(port));
      }
    } else if (*make) {
      const SplitSpec split = make_split(make_split_seed);
      std::vector<Session> sessions;
      if (make_kind == "validation") {
        sessions.push_back(build_validation_recovery_session(split, make_seed));
      } else if (make_kind == "dialect") {
        sessions = build_dialect_sessions(split, make_count, make_seed);
      } else {
        for (auto c : kRecoveryConditions) {
          if (condition_name(c) == make_condition) sessions = build_recovery_sessions(split, c, make_seed);
        }
      }
      save_sessions(make_out, sessions);
      log_info("wrote ", sessions.size(), " sessions to ", make_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
