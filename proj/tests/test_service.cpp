#include <thread>

#include "doctest.h"
#include "shrdlurn/nn/optim.hpp"
#include "shrdlurn/service.hpp"
#include "shrdlurn/trainer.hpp"
#include "test_util.hpp"

// After Eigen: resolv.h defines _res, an Eigen parameter name.
#include "httplib.h"

using namespace shrdlurn;
using nlohmann::json;

namespace {

// A model fitted to a handful of grammar examples, so that it interprets
// them as the rules do.
struct Fitted {
  std::shared_ptr<const nn::Model<Real>> model;
  std::vector<ExampleTriple> examples;
};

const Fitted& fitted() {
  static const Fitted f = [] {
    Fitted out;
    out.examples = testutil::small_dataset(8, 12);
    nn::ModelConfig mc;
    mc.hidden = 32;
    mc.conv_layers = 2;
    nn::Model<Real> m(mc, build_vocabulary(Dataset{out.examples, ""}), 2);
    std::vector<nn::EncodedExample> enc;
    for (const auto& ex : out.examples) enc.push_back(m.encode_example(ex));
    std::vector<const nn::EncodedExample*> batch;
    for (const auto& e : enc) batch.push_back(&e);
    auto opt = nn::make_optimizer<Real>(nn::OptimizerKind::adam, 1e-2);
    for (int step = 0; step < 300; ++step) {
      m.compute_gradients(batch, Real(0), nullptr);
      opt->step(m.params());
    }
    out.model = std::make_shared<const nn::Model<Real>>(std::move(m));
    return out;
  }();
  return f;
}

json state_json(const WorldState& s) { return serialize_state(s); }

json predict_body(const ExampleTriple& ex) {
  return {{"utt", ex.utterance}, {"start", state_json(ex.start)}};
}

int status_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ApiError& e) {
    return e.status();
  }
  return 200;
}

}  // namespace

TEST_CASE("create applies defaults and rejects excluded combinations") {
  SessionManager m(fitted().model);
  const auto a = m.create(json::object());
  CHECK(a["config"]["k"] == 7);
  CHECK(a["config"]["adapt"] == "embeddings");
  const auto b = m.create(nullptr);
  CHECK(a["id"] != b["id"]);
  CHECK(m.size() == 2);
  CHECK(status_of([&] { m.create({{"reuse", "none"}, {"adapt", "newwords"}}); }) == 400);
  CHECK(status_of([&] { m.create({{"k", "seven"}}); }) == 400);
  CHECK(status_of([&] { m.create({{"bogus", 1}}); }) == 400);
  CHECK(status_of([&] { m.create({{"k", 0}}); }) == 400);
  CHECK(m.create({{"k", 2}, {"steps", 3}})["config"]["k"] == 2);
}

TEST_CASE("predict, feedback and state") {
  SessionManager m(fitted().model);
  const std::string id = m.create({{"k", 2}, {"steps", 3}})["id"];
  const auto s0 = m.state(id);
  CHECK(s0["t"] == 0);
  CHECK(s0["trace"].empty());
  CHECK(s0["losses"].size() == 2);

  const auto& ex = fitted().examples[0];
  const auto p = m.predict(id, predict_body(ex));
  CHECK(p["predicted"] == state_json(apply(*parse_utterance(ex.utterance), ex.start)));
  CHECK(p["losses"].size() == 2);
  CHECK(status_of([&] { m.predict(id, predict_body(ex)); }) == 409);

  const auto f = m.feedback(id, {{"target", p["predicted"]}});
  CHECK(f["correct"] == true);
  CHECK(f["online_accuracy"] == 1.0);
  CHECK(f["t"] == 1);
  CHECK(status_of([&] { m.feedback(id, {{"target", p["predicted"]}}); }) == 409);

  // a deliberately different target counts as a miss
  m.predict(id, predict_body(fitted().examples[1]));
  WorldState other;
  other.piles[5] = {Color::cyan, Color::cyan, Color::cyan};
  const auto miss = m.feedback(id, {{"target", state_json(other)}});
  CHECK(miss["correct"] == false);
  CHECK(miss["online_accuracy"] == 0.5);

  const auto s2 = m.state(id);
  CHECK(s2["t"] == 2);
  CHECK(s2["buffer"] == 2);
  CHECK(s2["trace"].size() == 2);
  CHECK(s2["correct"] == json::array({true, false}));
  CHECK(s2["losses"].size() == 2);
}

TEST_CASE("request validation") {
  SessionManager m(fitted().model);
  const std::string id = m.create(json::object())["id"];
  const auto& ex = fitted().examples[0];
  auto bad = predict_body(ex);
  bad["start"].erase(0);
  CHECK(status_of([&] { m.predict(id, bad); }) == 422);
  bad = predict_body(ex);
  bad["start"][0] = "X";
  bad["start"][1] = "RED";
  bad["start"][2] = "X";
  CHECK(status_of([&] { m.predict(id, bad); }) == 422);
  bad = predict_body(ex);
  bad["utt"] = json::array();
  CHECK(status_of([&] { m.predict(id, bad); }) == 422);
  CHECK(status_of([&] { m.predict(id, {{"start", state_json(ex.start)}}); }) == 400);
  CHECK(status_of([&] { m.predict("missing", predict_body(ex)); }) == 404);
  CHECK(status_of([&] { m.feedback("missing", {{"target", state_json(ex.target)}}); }) == 404);
  CHECK(status_of([&] { m.state("missing"); }) == 404);
  // string utterances are tokenized on whitespace
  CHECK_NOTHROW(m.predict(id, {{"utt", "  " + join_tokens(ex.utterance) + " "}, {"start", state_json(ex.start)}}));
  m.remove(id);
  CHECK(status_of([&] { m.state(id); }) == 404);
  CHECK(status_of([&] { m.remove(id); }) == 404);
}

TEST_CASE("idle sessions expire") {
  auto now = SessionManager::Clock::time_point{};
  SessionManager m(fitted().model, {}, std::chrono::seconds(60), [&] { return now; });
  const std::string a = m.create(json::object())["id"];
  now += std::chrono::seconds(40);
  const std::string b = m.create(json::object())["id"];
  now += std::chrono::seconds(30);
  CHECK(m.expire_idle() == 1);
  CHECK(status_of([&] { m.state(a); }) == 404);
  CHECK(status_of([&] { m.state(b); }) == 200);
}

TEST_CASE("API replay matches offline replay") {
  Session session;
  session.id = "replay";
  const auto map = corruption_for({"add", "red"});
  for (const auto& ex : testutil::small_dataset(9, 8)) session.examples.push_back({map.apply(ex.utterance), ex.start, ex.target});
  AdaptConfig c;
  c.k = 3;
  c.steps = 4;
  const auto offline = run_session(*fitted().model, c, session);

  SessionManager m(fitted().model, c);
  const std::string id = m.create(json::object())["id"];
  double acc = 0;
  for (const auto& ex : session.examples) {
    m.predict(id, predict_body(ex));
    acc = m.feedback(id, {{"target", state_json(ex.target)}})["online_accuracy"];
  }
  CHECK(acc == offline.accuracy);
}

TEST_CASE("HTTP routes") {
  SessionManager manager(fitted().model, [] {
    AdaptConfig c;
    c.k = 2;
    c.steps = 2;
    return c;
  }());
  httplib::Server server;
  install_routes(server, manager, "*");
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto created = client.Post("/sessions", "{}", "application/json");
  REQUIRE(created);
  CHECK(created->status == 200);
  CHECK(created->get_header_value("Access-Control-Allow-Origin") == "*");
  const std::string id = json::parse(created->body)["id"];

  const auto& ex = fitted().examples[2];
  auto p = client.Post("/sessions/" + id + "/predict", predict_body(ex).dump(), "application/json");
  REQUIRE(p);
  CHECK(p->status == 200);
  const auto predicted = json::parse(p->body)["predicted"];
  auto again = client.Post("/sessions/" + id + "/predict", predict_body(ex).dump(), "application/json");
  CHECK(again->status == 409);
  auto f = client.Post("/sessions/" + id + "/feedback", json{{"target", state_json(ex.target)}}.dump(),
                       "application/json");
  REQUIRE(f);
  CHECK(f->status == 200);
  CHECK(json::parse(f->body)["t"] == 1);

  auto st = client.Get("/sessions/" + id);
  CHECK(st->status == 200);
  CHECK(json::parse(st->body)["trace"].size() == 1);

  auto bad_json = client.Post("/sessions/" + id + "/predict", "{not json", "application/json");
  CHECK(bad_json->status == 400);
  auto bad_cfg = client.Post("/sessions", R"({"reuse":"none","adapt":"newwords"})", "application/json");
  CHECK(bad_cfg->status == 400);
  auto short_state = predict_body(ex);
  short_state["start"].erase(0);
  auto unprocessable = client.Post("/sessions/" + id + "/predict", short_state.dump(), "application/json");
  CHECK(unprocessable->status == 422);
  CHECK(client.Get("/sessions/nope")->status == 404);
  auto pre = client.Options("/sessions/" + id + "/predict");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
  CHECK(client.Delete("/sessions/" + id)->status == 200);
  CHECK(client.Get("/sessions/" + id)->status == 404);

  server.stop();
  runner.join();
}
