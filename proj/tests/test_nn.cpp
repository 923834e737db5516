#include <cmath>
#include <numeric>

#include "doctest.h"
#include "shrdlurn/datagen.hpp"
#include "shrdlurn/nn/checkpoint.hpp"
#include "shrdlurn/nn/model.hpp"
#include "shrdlurn/nn/optim.hpp"
#include "test_util.hpp"

using namespace shrdlurn;
using namespace shrdlurn::nn;

namespace {

std::vector<EncodedExample> encode_all(const Model<double>& m, const std::vector<ExampleTriple>& xs) {
  std::vector<EncodedExample> out;
  for (const auto& x : xs) out.push_back(m.encode_example(x));
  return out;
}

}  // namespace

TEST_CASE("gradients agree with central differences for every architecture") {
  const auto data = testutil::small_dataset(11, 3);
  for (const auto& arch : testutil::kArchitectures) {
    for (int layers : {1, 2}) {
      ModelConfig cfg = testutil::tiny_config(arch);
      cfg.lstm_layers = layers;
      cfg.conv_layers = layers + 1;
      CAPTURE(arch);
      CAPTURE(layers);
      Model<double> model(cfg, testutil::grammar_vocab(), 5);
      const auto batch = encode_all(model, data);
      const double worst = testutil::max_gradient_error(model, batch);
      CHECK(worst <= 1e-4);
    }
  }
}

TEST_CASE("l2 penalty gradient is 2 lambda theta") {
  Model<double> model(testutil::tiny_config("seq2conv"), testutil::grammar_vocab(), 1);
  const auto data = testutil::small_dataset(3, 2);
  const auto batch = encode_all(model, data);
  std::vector<const EncodedExample*> ptrs;
  for (const auto& e : batch) ptrs.push_back(&e);
  model.compute_gradients(ptrs, 0.0, nullptr);
  std::vector<Matrix<double>> base;
  for (const auto& p : model.params()) base.push_back(p.grad);
  const double lambda = 0.05;
  model.compute_gradients(ptrs, lambda, nullptr);
  int i = 0;
  for (const auto& p : model.params()) {
    const Matrix<double> extra = p.grad - base[static_cast<std::size_t>(i++)];
    CHECK((extra - 2.0 * lambda * p.value).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("predictions are normalized with 23 positions for any utterance length") {
  Rng rng(3);
  const auto cols = all_columns();
  for (const auto& arch : testutil::kArchitectures) {
    ModelConfig cfg = testutil::tiny_config(arch);
    cfg.hidden = 8;
    Model<float> model(cfg, testutil::grammar_vocab(), 2);
    for (int m = 1; m <= 12; ++m) {
      Utterance u;
      for (int i = 0; i < m; ++i) {
        u.push_back(grammar_vocabulary()[rng.index(grammar_vocabulary().size())]);
      }
      const Prediction p = model.predict(u, sample_state(cols, rng));
      REQUIRE(p.probs.cols() == kStateLength);
      REQUIRE(p.probs.rows() == kNumStateTokens);
      for (int t = 0; t < kStateLength; ++t) CHECK(std::abs(p.probs.col(t).sum() - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("encoder output shapes") {
  const Utterance u{"remove", "red", "at", "3rd", "tile"};
  Model<double> lstm(testutil::tiny_config("seq2conv"), testutil::grammar_vocab(), 1);
  CHECK(lstm.hidden_states(u).cols() == 5);
  Model<double> conv(testutil::tiny_config("conv2conv"), testutil::grammar_vocab(), 1);
  CHECK(conv.hidden_states(u).cols() == 5);
  Model<double> bow(testutil::tiny_config("bow2seq"), testutil::grammar_vocab(), 1);
  const Matrix<double> h = bow.hidden_states({"red"});
  REQUIRE(h.cols() == 1);
  CHECK((h.col(0) - bow.word_embedding("red")).cwiseAbs().maxCoeff() == 0.0);
  const Matrix<double> mean = bow.hidden_states({"red", "cyan"});
  const Vector<double> expect = (bow.word_embedding("red") + bow.word_embedding("cyan")) / 2.0;
  CHECK((mean.col(0) - expect).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("conv encoder is translation invariant away from the boundaries") {
  ModelConfig cfg = testutil::tiny_config("conv2conv");
  cfg.conv_layers = 2;
  Model<double> model(cfg, testutil::grammar_vocab(), 4);
  const Utterance u(12, "red");
  const Matrix<double> h = model.hidden_states(u);
  // Two layers of kernel 3 see two tokens each side.
  for (int t = 3; t < 9; ++t) CHECK((h.col(t) - h.col(2)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((h.col(0) - h.col(5)).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("attention weights are convex and a single key is returned exactly") {
  ParamStore<double> store;
  Rng rng(9);
  auto rand = [&](int r, int c) {
    Matrix<double> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-2, 2);
    return m;
  };
  const int w = store.add("w", Component::decoder, false, rand(3, 4));
  Graph<double> g(store, false);
  const int B = 2, qs = 5, ks = 4;
  const NodeId q = g.input(rand(3, qs * B));
  const NodeId keys = g.input(rand(4, ks * B));
  const NodeId ctx = g.attention(q, keys, g.param(w), qs, ks, B);
  const auto& alpha = g.attention_weights(ctx);
  CHECK(alpha.minCoeff() >= 0.0);
  for (Eigen::Index c = 0; c < alpha.cols(); ++c) CHECK(std::abs(alpha.col(c).sum() - 1.0) < 1e-12);

  const Matrix<double> single = rand(4, B);
  const NodeId one = g.attention(q, g.input(single), g.param(w), qs, 1, B);
  for (int t = 0; t < qs; ++t) {
    for (int b = 0; b < B; ++b) {
      CHECK((g.value(one).col(t * B + b) - single.col(b)).cwiseAbs().maxCoeff() < 1e-15);
    }
  }

  Matrix<double> same(4, ks * B);
  for (int t = 0; t < ks; ++t) same.middleCols(t * B, B) = single;
  const NodeId rep = g.attention(q, g.input(same), g.param(w), qs, ks, B);
  CHECK((g.value(rep) - g.value(one)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("sequence loss analytic values") {
  Prediction p;
  p.probs = Matrix<double>::Constant(kNumStateTokens, kStateLength, 1.0 / kNumStateTokens);
  std::vector<int> target(kStateLength, 2);
  CHECK(sequence_nll(p, target) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  p.probs.setZero();
  p.probs.row(2).setOnes();
  CHECK(sequence_nll(p, target) == 0.0);
}

TEST_CASE("untrained model is near chance per token") {
  Model<float> model(testutil::tiny_config("seq2conv"), testutil::grammar_vocab(), 21);
  const auto split = make_split(2);
  const auto ds = generate_split(split, Split::train, 1000);
  std::vector<EncodedExample> enc;
  // Random targets: each position drawn uniformly from the six tokens.
  Rng rng(5);
  for (const auto& ex : ds.examples) {
    EncodedExample e = model.encode_example(ex);
    for (auto& t : e.target) t = static_cast<int>(rng.index(kNumStateTokens));
    enc.push_back(e);
  }
  const auto preds = model.predict_batch(enc);
  double hits = 0;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    for (int t = 0; t < kStateLength; ++t) hits += preds[i].tokens[t] == enc[i].target[t];
  }
  const double acc = hits / (enc.size() * kStateLength);
  CHECK(std::abs(acc - 1.0 / 6) < 0.02);
}

TEST_CASE("full-batch gradient descent decreases the loss monotonically") {
  ModelConfig cfg = testutil::tiny_config("seq2conv");
  cfg.hidden = 16;
  Model<double> model(cfg, testutil::grammar_vocab(), 8);
  const auto data = testutil::small_dataset(12, 10);
  const auto batch = encode_all(model, data);
  std::vector<const EncodedExample*> ptrs;
  for (const auto& e : batch) ptrs.push_back(&e);
  Sgd<double> sgd(0.5);
  double prev = model.compute_gradients(ptrs, 0.0, nullptr);
  for (int step = 0; step < 50; ++step) {
    sgd.step(model.params());
    const double loss = model.compute_gradients(ptrs, 0.0, nullptr);
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("sgd analytic steps") {
  ParamStore<double> store;
  const int i = store.add("theta", Component::encoder, false, Matrix<double>::Constant(1, 1, 1.0));
  store.zero_grad();
  store[i].grad(0, 0) = 2.0 * store[i].value(0, 0);  // d/dθ θ²
  Sgd<double> zero(0.0);
  zero.step(store);
  CHECK(store[i].value(0, 0) == 1.0);
  Sgd<double> sgd(0.1);
  sgd.step(store);
  CHECK(store[i].value(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("first adam step has magnitude lr regardless of gradient scale") {
  for (double scale : {1e-4, 1.0, 1e4}) {
    ParamStore<double> store;
    const int i = store.add("theta", Component::encoder, false, Matrix<double>::Zero(3, 1));
    store.zero_grad();
    store[i].grad << scale, -scale, 2 * scale;
    Adam<double> adam(1e-3);
    adam.step(store);
    for (int r = 0; r < 3; ++r) CHECK(std::abs(store[i].value(r, 0)) == doctest::Approx(1e-3).epsilon(1e-4));
  }
}

TEST_CASE("frozen parameters and columns do not move") {
  Model<double> model(testutil::tiny_config("seq2conv"), testutil::grammar_vocab(), 3);
  const std::vector<std::string> fresh{"roze"};
  model.register_new_words(fresh, 17);
  const int emb = model.word_embedding_param();
  auto& store = model.params();
  store.set_trainable([&](const Parameter<double>& p) { return p.name == "enc.embed"; });
  auto& table = store[emb];
  table.column_mask.assign(static_cast<std::size_t>(table.value.cols()), 0);
  table.column_mask.back() = 1;

  std::vector<Matrix<double>> before;
  for (const auto& p : store) before.push_back(p.value);
  ExampleTriple ex = testutil::small_dataset(1, 1).front();
  ex.utterance[1] = "roze";
  const EncodedExample enc = model.encode_example(ex);
  const EncodedExample* ptr = &enc;
  Adam<double> adam(0.1);
  for (int s = 0; s < 5; ++s) {
    model.compute_gradients(std::span(&ptr, 1), 0.01, nullptr);
    adam.step(store);
  }
  int idx = 0;
  for (const auto& p : store) {
    const auto& b = before[static_cast<std::size_t>(idx++)];
    if (p.name != "enc.embed") {
      CHECK((p.value - b).cwiseAbs().maxCoeff() == 0.0);
    } else {
      const auto last = p.value.cols() - 1;
      CHECK((p.value.leftCols(last) - b.leftCols(last)).cwiseAbs().maxCoeff() == 0.0);
      CHECK((p.value.col(last) - b.col(last)).cwiseAbs().maxCoeff() > 0.0);
    }
  }
}

TEST_CASE("registering new words") {
  ModelConfig cfg = testutil::tiny_config("seq2conv");
  cfg.embed_scale = 0.1;
  Model<double> a(cfg, testutil::grammar_vocab(), 3);
  Model<double> b = a;
  const Matrix<double> before = a.params()[a.word_embedding_param()].value;
  const std::vector<std::string> w{"roze"};
  a.register_new_words(w, 1);
  b.register_new_words(w, 2);
  CHECK(a.vocab().size() == static_cast<int>(grammar_vocabulary().size()) + 1);
  CHECK(a.vocab().is_new(a.vocab().id("roze")));
  const Matrix<double>& after = a.params()[a.word_embedding_param()].value;
  CHECK((after.leftCols(before.cols()) - before).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.word_embedding("roze") - b.word_embedding("roze")).cwiseAbs().maxCoeff() > 0.0);
  CHECK(a.word_embedding("roze").cwiseAbs().maxCoeff() <= 0.1);
  CHECK_THROWS_AS(a.register_new_words(w, 3), std::invalid_argument);
  CHECK_THROWS_AS(a.predict({"blah"}, WorldState{}), UnknownToken);
}

TEST_CASE("cosine analytic values") {
  const std::vector<double> v{1.0, -2.0, 0.5};
  const std::vector<double> neg{-1.0, 2.0, -0.5};
  CHECK(cosine(v, v) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine(v, neg) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK_THROWS_AS(cosine(v, std::vector<double>{0, 0, 0}), std::invalid_argument);
}

TEST_CASE("checkpoints reproduce forward outputs exactly") {
  const std::string path = testutil::temp_path("ckpt.json");
  for (const auto& arch : testutil::kArchitectures) {
    ModelConfig cfg = testutil::tiny_config(arch);
    cfg.hidden = 8;
    Model<float> model(cfg, testutil::grammar_vocab(), 12);
    model.register_new_words(std::vector<std::string>{"roze", "ajd"}, 4);
    save_checkpoint(model, path);
    const Model<float> loaded = load_checkpoint<float>(path);
    CHECK(loaded.config() == model.config());
    CHECK(loaded.vocab().words() == model.vocab().words());
    CHECK(loaded.vocab().base_size() == model.vocab().base_size());
    const Utterance u{"ajd", "roze", "at", "odd", "tile"};
    WorldState s;
    s.piles[0].push(Color::red);
    const auto p1 = model.predict(u, s);
    const auto p2 = loaded.predict(u, s);
    CHECK((p1.probs - p2.probs).cwiseAbs().maxCoeff() == 0.0);
  }
  std::remove(path.c_str());
}

TEST_CASE("fixed seed gives bit-identical parameters after training") {
  auto run = [] {
    Model<float> model(testutil::tiny_config("conv2seq"), testutil::grammar_vocab(), 6);
    const auto split = make_split(1);
    const auto ds = generate_split(split, Split::train, 16);
    std::vector<EncodedExample> enc;
    for (const auto& e : ds.examples) enc.push_back(model.encode_example(e));
    std::vector<const EncodedExample*> ptrs;
    for (const auto& e : enc) ptrs.push_back(&e);
    Adam<float> adam(1e-2);
    Rng drop(3);
    for (int s = 0; s < 10; ++s) {
      model.compute_gradients(ptrs, 1e-4f, &drop);
      adam.step(model.params());
    }
    return model;
  };
  const auto a = run();
  const auto b = run();
  for (int i = 0; i < a.params().size(); ++i) {
    CHECK((a.params()[i].value - b.params()[i].value).cwiseAbs().maxCoeff() == 0.0f);
  }
}
