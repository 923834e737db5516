#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "shrdlurn/adapter.hpp"
#include "test_util.hpp"

using namespace shrdlurn;

namespace {

nn::Model<Real> base_model(const std::string& arch = "seq2conv", std::uint64_t seed = 5) {
  auto cfg = testutil::tiny_config(arch);
  cfg.hidden = 8;
  cfg.embed_scale = 0.1;
  return nn::Model<Real>(cfg, testutil::grammar_vocab(), seed);
}

Session corrupted_session(std::size_t n, std::uint64_t seed = 3) {
  Session s;
  s.id = "t";
  const auto map = corruption_for({"red", "remove", "2nd"});
  for (const auto& ex : testutil::small_dataset(seed, n)) {
    s.examples.push_back({map.apply(ex.utterance), ex.start, ex.target});
  }
  return s;
}

AdaptConfig quick(AdaptConfig c = {}) {
  c.k = 3;
  c.steps = 5;
  return c;
}

bool same_values(const nn::Parameter<Real>& a, const nn::Parameter<Real>& b, Eigen::Index cols) {
  return a.value.leftCols(cols) == b.value.leftCols(cols);
}

}  // namespace

TEST_CASE("argmin selection rules") {
  const double inf = std::numeric_limits<double>::infinity();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(argmin_loss(std::vector<double>{3, 1, 2}) == 1);
  CHECK(argmin_loss(std::vector<double>{2, 1, 1}) == 1);
  CHECK(argmin_loss(std::vector<double>{nan, 5, 4}) == 2);
  CHECK(argmin_loss(std::vector<double>{inf, nan, 7}) == 2);
  CHECK(argmin_loss(std::vector<double>{inf, nan}) == 0);
  CHECK(argmin_loss(std::vector<double>{}) == 0);
}

TEST_CASE("scope names and excluded combinations") {
  CHECK(parse_reuse("enc+dec") == ReuseScope::all);
  CHECK(parse_reuse("all") == ReuseScope::all);
  CHECK(parse_reuse("dec") == ReuseScope::dec);
  CHECK(parse_adapt("newwords") == AdaptScope::newwords);
  CHECK(parse_selection("1-out") == Selection::one_out);
  CHECK(selection_name(Selection::one_out) == "1out");
  CHECK_THROWS_AS(parse_adapt("decoder"), std::invalid_argument);

  AdaptConfig c;
  CHECK_NOTHROW(c.validate());
  c.reuse = ReuseScope::none;
  for (auto a : {AdaptScope::newwords, AdaptScope::embeddings, AdaptScope::encoder}) {
    c.adapt = a;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }
  c.reuse = ReuseScope::dec;
  c.adapt = AdaptScope::embeddings;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.adapt = AdaptScope::encoder;
  CHECK_NOTHROW(c.validate());
  c.k = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("config JSON round trip") {
  AdaptConfig c;
  c.reuse = ReuseScope::dec;
  c.adapt = AdaptScope::all;
  c.k = 2;
  c.steps = 17;
  c.optimizer = nn::OptimizerKind::sgd;
  c.lr = 0.25;
  c.l2 = 1e-4;
  c.selection = Selection::one_out;
  c.seed = 42;
  CHECK(adapt_config_from_json(adapt_config_to_json(c)) == c);
  CHECK(adapt_config_from_json(nlohmann::json::object(), c) == c);
  CHECK(adapt_config_from_json({{"k", 9}}).k == 9);
  CHECK_THROWS_AS(adapt_config_from_json({{"kk", 9}}), std::invalid_argument);
}

TEST_CASE("online accuracy units") {
  std::vector<InteractionRecord> log(4);
  CHECK(online_accuracy(std::span<const InteractionRecord>{}) == 0.0);
  log[0].correct = true;
  CHECK(online_accuracy(std::span(log).first(1)) == 1.0);
  CHECK(online_accuracy(std::span(log).first(2)) == 0.5);
  log[2].correct = true;
  CHECK(online_accuracy(log) == 0.5);
}

TEST_CASE("parameters outside the adapt scope never move") {
  const auto base = base_model();
  const auto session = corrupted_session(6);
  const Eigen::Index base_words = base.vocab().size();
  std::set<std::string> unseen;
  for (const auto& ex : session.examples)
    for (const auto& w : ex.utterance)
      if (!base.vocab().find(w)) unseen.insert(w);
  REQUIRE_FALSE(unseen.empty());
  for (auto adapt : {AdaptScope::newwords, AdaptScope::embeddings, AdaptScope::encoder, AdaptScope::all}) {
    CAPTURE(adapt_name(adapt));
    AdaptConfig c = quick();
    c.adapt = adapt;
    AdaptSession s(base, c);
    for (const auto& ex : session.examples) s.interact(ex);
    for (int i = 0; i < s.k(); ++i) {
      const auto& m = s.model(i);
      CHECK(m.vocab().size() == base.vocab().size() + static_cast<int>(unseen.size()));
      for (int p = 0; p < base.params().size(); ++p) {
        const auto& before = base.params()[p];
        const auto& after = m.params()[p];
        const bool is_embed = before.name == "enc.embed";
        bool in_scope = false;
        switch (adapt) {
          case AdaptScope::newwords:
          case AdaptScope::embeddings: in_scope = is_embed; break;
          case AdaptScope::encoder: in_scope = before.component == nn::Component::encoder; break;
          case AdaptScope::all: in_scope = true; break;
        }
        const Eigen::Index cols = before.value.cols();
        if (!in_scope || (adapt == AdaptScope::newwords && is_embed)) {
          CHECK_MESSAGE(same_values(before, after, cols), before.name);
        } else {
          CHECK_MESSAGE(!same_values(before, after, cols), before.name);
        }
      }
    }
  }
  CHECK(base.vocab().size() == base_words);
}

TEST_CASE("reuse scopes reinitialize the right components") {
  const auto base = base_model();
  auto component_equal = [&](const nn::Model<Real>& m, nn::Component c) {
    bool equal = true;
    for (int p = 0; p < base.params().size(); ++p) {
      if (base.params()[p].component != c) continue;
      equal = equal && base.params()[p].value == m.params()[p].value;
    }
    return equal;
  };
  AdaptConfig c = quick();
  c.reuse = ReuseScope::dec;
  c.adapt = AdaptScope::encoder;
  AdaptSession dec(base, c);
  CHECK(component_equal(dec.model(0), nn::Component::decoder));
  CHECK_FALSE(component_equal(dec.model(0), nn::Component::encoder));
  c.reuse = ReuseScope::none;
  c.adapt = AdaptScope::all;
  AdaptSession none(base, c);
  CHECK_FALSE(component_equal(none.model(0), nn::Component::decoder));
  CHECK_FALSE(component_equal(none.model(0), nn::Component::encoder));
  // copies start from different draws
  CHECK(none.model(0).params()[0].value != none.model(1).params()[0].value);
  const auto session = corrupted_session(4);
  const auto a = run_session(base, c, session);
  c.reuse = ReuseScope::all;
  c.adapt = AdaptScope::all;
  const auto b = run_session(base, c, session);
  bool differ = false;
  for (std::size_t i = 0; i < a.log.size(); ++i) differ |= a.log[i].losses != b.log[i].losses;
  CHECK(differ);
}

TEST_CASE("zero steps leaves every copy at the base model") {
  const auto base = base_model();
  AdaptConfig c = quick();
  c.steps = 0;
  c.adapt = AdaptScope::all;
  AdaptSession s(base, c);
  const auto session = corrupted_session(5);
  for (const auto& ex : session.examples) s.interact(ex);
  for (int i = 0; i < s.k(); ++i) {
    for (int p = 0; p < base.params().size(); ++p) {
      const auto& before = base.params()[p];
      CHECK(same_values(before, s.model(i).params()[p], before.value.cols()));
    }
  }
}

TEST_CASE("selection losses: greedy sums the buffer, 1-out uses the last example") {
  const auto base = base_model();
  const auto session = corrupted_session(3);
  for (auto sel : {Selection::greedy, Selection::one_out}) {
    AdaptConfig c = quick();
    c.selection = sel;
    AdaptSession s(base, c);
    CHECK(s.selection_losses() == std::vector<double>(3, 0.0));
    for (const auto& ex : session.examples) s.interact(ex);
    std::vector<nn::EncodedExample> enc;
    for (const auto& ex : s.buffer()) enc.push_back(s.model(0).encode_example(ex));
    const auto losses = s.selection_losses();
    for (int i = 0; i < s.k(); ++i) {
      const auto per = s.model(i).example_losses(enc);
      double expected = 0;
      if (sel == Selection::greedy) {
        for (double l : per) expected += l;
      } else {
        expected = per.back();
      }
      CHECK(losses[static_cast<std::size_t>(i)] == doctest::Approx(expected).epsilon(1e-9));
    }
    CHECK(s.select_model() == static_cast<int>(argmin_loss(losses)));
  }
}

TEST_CASE("1-out trains only on the examples before the last") {
  // With one copy, 1-out on (e1, e2) must match greedy on (e1, e1): both
  // draw only e1 in both rounds.
  const auto base = base_model();
  const auto session = corrupted_session(2);
  AdaptConfig c = quick();
  c.k = 1;
  c.selection = Selection::one_out;
  AdaptSession a(base, c);
  a.interact(session.examples[0]);
  a.interact(session.examples[1]);
  c.selection = Selection::greedy;
  AdaptSession b(base, c);
  b.interact(session.examples[0]);
  b.interact(session.examples[0]);
  // e2 may bring new words; those columns exist only in a.
  for (int p = 0; p < a.model(0).params().size(); ++p) {
    const auto& va = a.model(0).params()[p].value;
    const auto& vb = b.model(0).params()[p].value;
    REQUIRE(va.rows() == vb.rows());
    CAPTURE(p);
    // the wider matrix shifts vectorized reductions by float rounding only
    CHECK((va.leftCols(vb.cols()) - vb).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("predict/feedback alternation and new words") {
  const auto base = base_model();
  AdaptSession s(base, quick());
  const auto session = corrupted_session(2);
  CHECK_THROWS_AS(s.feedback(session.examples[0].target), std::logic_error);
  s.predict(session.examples[0].utterance, session.examples[0].start);
  CHECK(s.pending());
  CHECK_THROWS_AS(s.predict(session.examples[0].utterance, session.examples[0].start), std::logic_error);
  for (int i = 0; i < s.k(); ++i) {
    for (const auto& w : session.examples[0].utterance) CHECK(s.model(i).vocab().find(w).has_value());
  }
  const auto rec = s.feedback(session.examples[0].target);
  CHECK_FALSE(s.pending());
  CHECK(s.t() == 1);
  CHECK(s.buffer().size() == 1);
  CHECK(rec.losses.size() == 3);
  CHECK_THROWS_AS(s.predict({}, session.examples[0].start), std::invalid_argument);

  const auto j = record_to_json(rec);
  for (const char* key : {"utterance", "predicted", "target", "correct", "selected_model", "losses"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["predicted"].size() == kStateLength);
}

TEST_CASE("replay is bit-identical for a fixed seed") {
  const auto base = base_model("conv2seq");
  const auto session = corrupted_session(6);
  AdaptConfig c = quick();
  c.selection = Selection::one_out;
  const auto a = run_session(base, c, session);
  const auto b = run_session(base, c, session);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].predicted == b.log[i].predicted);
    CHECK(a.log[i].losses == b.log[i].losses);
    CHECK(a.log[i].selected == b.log[i].selected);
  }
  CHECK(session_result_to_json(a, c).dump() == session_result_to_json(b, c).dump());
  c.seed = 2;
  const auto other = run_session(base, c, session);
  bool differ = false;
  for (std::size_t i = 0; i < a.log.size(); ++i) differ |= a.log[i].losses != other.log[i].losses;
  CHECK(differ);
}

TEST_CASE("a wrong target affects only later predictions") {
  const auto base = base_model();
  const auto session = corrupted_session(8);
  const AdaptConfig c = quick();
  for (std::size_t t = 0; t < 7; t += 3) {
    Session adversarial = session;
    auto& target = adversarial.examples[t].target;
    target = WorldState{};
    if (target == session.examples[t].target) target.piles[0] = {Color::cyan};
    const auto a = run_session(base, c, session);
    const auto b = run_session(base, c, adversarial);
    for (std::size_t i = 0; i <= t; ++i) {
      CHECK(a.log[i].predicted == b.log[i].predicted);
      CHECK(a.log[i].losses == b.log[i].losses);
    }
    CHECK(a.log[t + 1].losses != b.log[t + 1].losses);
  }
}

TEST_CASE("diverging copies are quarantined") {
  const auto base = base_model();
  AdaptConfig c = quick();
  c.optimizer = nn::OptimizerKind::sgd;
  c.adapt = AdaptScope::all;
  c.lr = 1e30;
  AdaptSession s(base, c);
  for (const auto& ex : corrupted_session(3).examples) CHECK_NOTHROW(s.interact(ex));
  int quarantined = 0;
  for (int i = 0; i < s.k(); ++i) quarantined += s.quarantined(i);
  CHECK(quarantined > 0);
}

TEST_CASE("online grid and tuning") {
  OnlineGrid g;
  CHECK(g.size() == 144);
  const auto all = expand_online_grid(g, AdaptConfig{});
  CHECK(all.size() == 144);
  std::set<std::string> distinct;
  for (const auto& c : all) distinct.insert(adapt_config_to_json(c).dump());
  CHECK(distinct.size() == 144);

  const auto j = nlohmann::json::parse(R"({"optimizers":["sgd"],"steps":[0],"lr":[0.1,0.01],"l2":[0],"selection":["greedy"]})");
  const OnlineGrid small = online_grid_from_json(j);
  CHECK(small.size() == 2);
  // zero steps: every point scores the same, the first one wins
  const auto base = base_model();
  const Session s = corrupted_session(3);
  AdaptConfig bc = quick();
  const auto r = tune_online(base, std::span(&s, 1), small, bc);
  CHECK(r.rows.size() == 2);
  CHECK(r.rows[0].mean_accuracy == r.rows[1].mean_accuracy);
  CHECK(r.best.lr == 0.1);
  CHECK(r.best.k == bc.k);
}
