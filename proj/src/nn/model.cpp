#include "shrdlurn/nn/model.hpp"

#include <cmath>
#include <map>

namespace shrdlurn::nn {

std::string_view encoder_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::lstm: return "lstm";
    case EncoderKind::conv: return "conv";
    case EncoderKind::bow: return "bow";
  }
  return "";
}

std::string_view decoder_name(DecoderKind k) { return k == DecoderKind::lstm ? "lstm" : "conv"; }

EncoderKind parse_encoder(std::string_view s) {
  if (s == "lstm" || s == "seq") return EncoderKind::lstm;
  if (s == "conv") return EncoderKind::conv;
  if (s == "bow") return EncoderKind::bow;
  throw std::invalid_argument("unknown encoder kind '" + std::string(s) + "'");
}

DecoderKind parse_decoder(std::string_view s) {
  if (s == "lstm" || s == "seq") return DecoderKind::lstm;
  if (s == "conv") return DecoderKind::conv;
  throw std::invalid_argument("unknown decoder kind '" + std::string(s) + "'");
}

std::string arch_name(EncoderKind e, DecoderKind d) {
  const std::string enc = e == EncoderKind::lstm ? "seq" : std::string(encoder_name(e));
  const std::string dec = d == DecoderKind::lstm ? "seq" : "conv";
  return enc + "2" + dec;
}

std::pair<EncoderKind, DecoderKind> parse_arch(std::string_view name) {
  const auto pos = name.find('2');
  if (pos == std::string_view::npos) {
    throw std::invalid_argument("architecture names look like seq2conv, got '" +
                                std::string(name) + "'");
  }
  return {parse_encoder(name.substr(0, pos)), parse_decoder(name.substr(pos + 1))};
}

void ModelConfig::validate() const {
  if (hidden < 1) throw std::invalid_argument("hidden size must be positive");
  if (lstm_layers < 1 || conv_layers < 1) throw std::invalid_argument("layer counts must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("kernel size must be odd");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0, 1)");
}

double sequence_nll(const Prediction& p, std::span<const int> target) {
  if (target.size() != static_cast<std::size_t>(p.probs.cols())) {
    throw std::invalid_argument("target length differs from prediction length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    total -= std::log(std::max(p.probs(target[i], static_cast<Eigen::Index>(i)), 1e-300));
  }
  return total / static_cast<double>(target.size());
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine of vectors of different sizes");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

template <typename T>
Model<T>::Model(ModelConfig config, Vocabulary vocab, std::uint64_t seed)
    : config_(config), vocab_(std::move(vocab)) {
  config_.validate();
  if (vocab_.size() == 0) throw std::invalid_argument("empty vocabulary");
  build();
  for (auto& p : params_) init_param(p, seed);
}

template <typename T>
void Model<T>::build() {
  const int d = config_.hidden;
  const int k = config_.kernel;
  auto weight = [&](const std::string& name, Component c, int rows, int cols) {
    return params_.add(name, c, false, Matrix<T>::Zero(rows, cols));
  };
  const auto E = Component::encoder;
  const auto D = Component::decoder;

  enc_embed_ = params_.add("enc.embed", E, true, Matrix<T>::Zero(d, vocab_.size()));
  if (config_.encoder == EncoderKind::lstm) {
    for (int l = 0; l < config_.lstm_layers; ++l) {
      const std::string p = "enc.lstm" + std::to_string(l);
      enc_lstm_.push_back({weight(p + ".wx", E, 4 * d, d), -1, weight(p + ".wh", E, 4 * d, d),
                           weight(p + ".b", E, 4 * d, 1)});
    }
  } else if (config_.encoder == EncoderKind::conv) {
    for (int l = 0; l < config_.conv_layers; ++l) {
      const std::string p = "enc.conv" + std::to_string(l);
      ConvLayer layer;
      layer.w = weight(p + ".w", E, 2 * d, k * d);
      layer.b = weight(p + ".b", E, 2 * d, 1);
      enc_conv_.push_back(layer);
    }
  }

  dec_embed_ = params_.add("dec.embed", D, true, Matrix<T>::Zero(d, kNumStateTokens));
  if (config_.decoder == DecoderKind::lstm) {
    for (int l = 0; l < config_.lstm_layers; ++l) {
      const std::string p = "dec.lstm" + std::to_string(l);
      LstmLayer layer;
      layer.wx = weight(p + ".wx", D, 4 * d, d);
      if (l == 0) layer.wf = weight(p + ".wf", D, 4 * d, d);
      layer.wh = weight(p + ".wh", D, 4 * d, d);
      layer.b = weight(p + ".b", D, 4 * d, 1);
      dec_lstm_.push_back(layer);
    }
    dec_att_ = weight("dec.att.w", D, d, d);
  } else {
    dec_pos_ = params_.add("dec.pos", D, true, Matrix<T>::Zero(d, kStateLength));
    for (int l = 0; l < config_.conv_layers; ++l) {
      const std::string p = "dec.conv" + std::to_string(l);
      ConvLayer layer;
      layer.w = weight(p + ".w", D, 2 * d, k * d);
      layer.b = weight(p + ".b", D, 2 * d, 1);
      layer.att = weight(p + ".att", D, d, d);
      layer.proj_w = weight(p + ".proj.w", D, d, d);
      layer.proj_b = weight(p + ".proj.b", D, d, 1);
      dec_conv_.push_back(layer);
    }
  }
  comb_w_ = weight("dec.comb.w", D, d, 2 * d);
  comb_b_ = weight("dec.comb.b", D, d, 1);
  out_w_ = weight("dec.out.w", D, kNumStateTokens, d);
  out_b_ = weight("dec.out.b", D, kNumStateTokens, 1);
}

template <typename T>
void Model<T>::init_param(Parameter<T>& p, std::uint64_t seed) const {
  Rng rng(derive_seed(seed, fnv1a(p.name)));
  const double scale = p.embedding ? config_.embed_scale : config_.init_scale;
  for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      p.value(r, c) = static_cast<T>(rng.uniform(-scale, scale));
    }
  }
}

template <typename T>
void Model<T>::reinitialize(Component which, std::uint64_t seed) {
  for (auto& p : params_) {
    if (p.component == which) init_param(p, seed);
  }
}

template <typename T>
std::vector<int> Model<T>::register_new_words(std::span<const std::string> words,
                                              std::uint64_t seed) {
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (vocab_.find(words[i])) {
      throw std::invalid_argument("word '" + words[i] + "' already in vocabulary");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (words[j] == words[i]) throw std::invalid_argument("duplicate word '" + words[i] + "'");
    }
  }
  Parameter<T>& table = params_[enc_embed_];
  std::vector<int> ids;
  for (const auto& w : words) {
    const int id = vocab_.add_new_word(w);
    ids.push_back(id);
    const Eigen::Index rows = table.value.rows();
    table.value.conservativeResize(rows, id + 1);
    Rng rng(derive_seed(seed, fnv1a(w)));
    for (Eigen::Index r = 0; r < rows; ++r) {
      table.value(r, id) = static_cast<T>(rng.uniform(-config_.embed_scale, config_.embed_scale));
    }
    if (table.grad.size() != 0) {
      table.grad.conservativeResize(rows, id + 1);
      table.grad.col(id).setZero();
    }
    if (!table.column_mask.empty()) table.column_mask.push_back(0);
  }
  return ids;
}

template <typename T>
Vector<T> Model<T>::word_embedding(const std::string& word) const {
  return params_[enc_embed_].value.col(vocab_.id(word));
}

template <typename T>
EncodedExample Model<T>::encode_input(const Utterance& u, const WorldState& start) const {
  if (u.empty()) throw std::invalid_argument("empty utterance");
  EncodedExample ex;
  ex.utterance = vocab_.ids(u);
  ex.start = state_token_ids(start);
  ex.target = ex.start;
  return ex;
}

template <typename T>
EncodedExample Model<T>::encode_example(const ExampleTriple& e) const {
  EncodedExample ex = encode_input(e.utterance, e.start);
  ex.target = state_token_ids(e.target);
  return ex;
}

template <typename T>
typename Model<T>::Encoded Model<T>::encode(Graph<T>& g,
                                            std::span<const EncodedExample* const> batch) const {
  const int B = static_cast<int>(batch.size());
  const int m = static_cast<int>(batch.front()->utterance.size());
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(m * B));
  for (int t = 0; t < m; ++t) {
    for (const auto* ex : batch) {
      if (static_cast<int>(ex->utterance.size()) != m) {
        throw std::invalid_argument("batch utterances must share one length");
      }
      ids.push_back(ex->utterance[static_cast<std::size_t>(t)]);
    }
  }
  const double p = config_.dropout;
  const int d = config_.hidden;
  NodeId x = g.dropout(g.lookup(enc_embed_, ids), p);
  const NodeId embedded = x;

  Encoded out;
  switch (config_.encoder) {
    case EncoderKind::bow:
      out.keys = g.mean_over_time(x, m, B);
      out.values = out.keys;
      out.steps = 1;
      break;
    case EncoderKind::conv:
      for (std::size_t l = 0; l < enc_conv_.size(); ++l) {
        if (l > 0) x = g.dropout(x, p);
        const auto& layer = enc_conv_[l];
        const NodeId z = g.glu(g.conv1d(x, g.param(layer.w), g.param(layer.b), m, B));
        x = g.add(x, z);
      }
      out.keys = x;
      out.values = g.add(x, embedded);
      out.steps = m;
      break;
    case EncoderKind::lstm: {
      const NodeId zero = g.input(Matrix<T>::Zero(d, B));
      for (std::size_t l = 0; l < enc_lstm_.size(); ++l) {
        if (l > 0) x = g.dropout(x, p);
        const auto& layer = enc_lstm_[l];
        const NodeId wh = g.param(layer.wh);
        const NodeId pre_all = g.add_bias(g.matmul(g.param(layer.wx), x), g.param(layer.b));
        NodeId h = -1;
        NodeId c = zero;
        std::vector<NodeId> hs;
        for (int t = 0; t < m; ++t) {
          NodeId pre = g.slice_cols(pre_all, t * B, B);
          if (h >= 0) pre = g.add(pre, g.matmul(wh, h));
          const NodeId hc = g.lstm_cell(pre, c);
          h = g.slice_rows(hc, 0, d);
          c = g.slice_rows(hc, d, d);
          hs.push_back(h);
        }
        x = g.concat_cols(hs);
        out.final_h.push_back(h);
        out.final_c.push_back(c);
      }
      out.keys = x;
      out.values = g.add(x, embedded);
      out.steps = m;
      break;
    }
  }
  return out;
}

template <typename T>
NodeId Model<T>::decode(Graph<T>& g, const Encoded& enc,
                        std::span<const EncodedExample* const> batch) const {
  const int B = static_cast<int>(batch.size());
  const int n = kStateLength;
  const int d = config_.hidden;
  const double p = config_.dropout;
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(n * B));
  for (int t = 0; t < n; ++t) {
    for (const auto* ex : batch) ids.push_back(ex->start[static_cast<std::size_t>(t)]);
  }
  NodeId x = g.lookup(dec_embed_, ids);

  NodeId features = -1;
  NodeId context = -1;
  if (config_.decoder == DecoderKind::conv) {
    std::vector<int> pos;
    pos.reserve(ids.size());
    for (int t = 0; t < n; ++t) pos.insert(pos.end(), static_cast<std::size_t>(B), t);
    x = g.dropout(g.add(x, g.lookup(dec_pos_, pos)), p);
    for (std::size_t l = 0; l < dec_conv_.size(); ++l) {
      if (l > 0) x = g.dropout(x, p);
      const auto& layer = dec_conv_[l];
      const NodeId z = g.glu(g.conv1d(x, g.param(layer.w), g.param(layer.b), n, B));
      context = g.attention(z, enc.keys, enc.values, g.param(layer.att), n, enc.steps, B);
      const NodeId proj =
          g.add_bias(g.matmul(g.param(layer.proj_w), context), g.param(layer.proj_b));
      x = g.add(g.add(x, z), proj);
    }
    features = x;
  } else {
    x = g.dropout(x, p);
    const std::size_t L = dec_lstm_.size();
    const NodeId zero = g.input(Matrix<T>::Zero(d, B));
    std::vector<NodeId> h(L, -1), c(L, zero);
    if (config_.encoder == EncoderKind::lstm) {
      for (std::size_t l = 0; l < L; ++l) {
        h[l] = enc.final_h[l];
        c[l] = enc.final_c[l];
      }
    }
    std::vector<NodeId> wx(L), wh(L), bias(L);
    for (std::size_t l = 0; l < L; ++l) {
      wx[l] = g.param(dec_lstm_[l].wx);
      wh[l] = g.param(dec_lstm_[l].wh);
      bias[l] = g.param(dec_lstm_[l].b);
    }
    const NodeId wf = g.param(dec_lstm_[0].wf);
    const NodeId att = g.param(dec_att_);
    const NodeId cw = g.param(comb_w_);
    const NodeId cb = g.param(comb_b_);
    const NodeId pre0_all = g.add_bias(g.matmul(wx[0], x), bias[0]);
    NodeId feed = -1;
    std::vector<NodeId> outs;
    for (int t = 0; t < n; ++t) {
      for (std::size_t l = 0; l < L; ++l) {
        NodeId pre;
        if (l == 0) {
          pre = g.slice_cols(pre0_all, t * B, B);
          if (feed >= 0) pre = g.add(pre, g.matmul(wf, feed));
        } else {
          pre = g.add_bias(g.matmul(wx[l], g.dropout(h[l - 1], p)), bias[l]);
        }
        if (h[l] >= 0) pre = g.add(pre, g.matmul(wh[l], h[l]));
        const NodeId hc = g.lstm_cell(pre, c[l]);
        h[l] = g.slice_rows(hc, 0, d);
        c[l] = g.slice_rows(hc, d, d);
      }
      const NodeId top = h[L - 1];
      const NodeId ctx = g.attention(top, enc.keys, enc.values, att, 1, enc.steps, B);
      const std::array<NodeId, 2> parts{top, ctx};
      feed = g.tanh(g.add_bias(g.matmul(cw, g.concat_rows(parts)), cb));
      outs.push_back(feed);
    }
    const NodeId all = g.dropout(g.concat_cols(outs), p);
    return g.add_bias(g.matmul(g.param(out_w_), all), g.param(out_b_));
  }

  const std::array<NodeId, 2> parts{features, context};
  const NodeId combined =
      g.tanh(g.add_bias(g.matmul(g.param(comb_w_), g.concat_rows(parts)), g.param(comb_b_)));
  return g.add_bias(g.matmul(g.param(out_w_), g.dropout(combined, p)), g.param(out_b_));
}

template <typename T>
NodeId Model<T>::forward(Graph<T>& g, std::span<const EncodedExample* const> batch) const {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  return decode(g, encode(g, batch), batch);
}

template <typename T>
Matrix<T> Model<T>::hidden_states(const Utterance& u) const {
  const EncodedExample ex = encode_input(u, WorldState{});
  auto& store = const_cast<ParamStore<T>&>(params_);
  Graph<T> g(store, false);
  const EncodedExample* ptr = &ex;
  const Encoded enc = encode(g, std::span<const EncodedExample* const>(&ptr, 1));
  return g.value(enc.keys);
}

template <typename T>
std::vector<Prediction> Model<T>::predict_same_length(
    std::span<const EncodedExample* const> batch) const {
  // Inference graphs never write to the parameter store.
  auto& store = const_cast<ParamStore<T>&>(params_);
  Graph<T> g(store, false);
  const NodeId logits = forward(g, batch);
  const Matrix<T>& z = g.value(logits);
  const int B = static_cast<int>(batch.size());
  std::vector<Prediction> out(batch.size());
  for (int b = 0; b < B; ++b) {
    Prediction& pr = out[static_cast<std::size_t>(b)];
    pr.probs.resize(kNumStateTokens, kStateLength);
    for (int t = 0; t < kStateLength; ++t) {
      const auto col = z.col(static_cast<Eigen::Index>(t) * B + b).template cast<double>();
      const double mx = col.maxCoeff();
      Eigen::VectorXd e = (col.array() - mx).exp();
      e /= e.sum();
      pr.probs.col(t) = e;
      Eigen::Index best = 0;
      z.col(static_cast<Eigen::Index>(t) * B + b).maxCoeff(&best);
      pr.tokens[static_cast<std::size_t>(t)] = static_cast<int>(best);
    }
  }
  return out;
}

template <typename T>
std::vector<Prediction> Model<T>::predict_batch(std::span<const EncodedExample> batch) const {
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t i = 0; i < batch.size(); ++i) by_length[batch[i].utterance.size()].push_back(i);
  std::vector<Prediction> out(batch.size());
  constexpr std::size_t kChunk = 256;
  for (const auto& [len, idx] : by_length) {
    for (std::size_t s = 0; s < idx.size(); s += kChunk) {
      std::vector<const EncodedExample*> ptrs;
      for (std::size_t j = s; j < std::min(idx.size(), s + kChunk); ++j) ptrs.push_back(&batch[idx[j]]);
      auto preds = predict_same_length(ptrs);
      for (std::size_t j = 0; j < preds.size(); ++j) out[idx[s + j]] = std::move(preds[j]);
    }
  }
  return out;
}

template <typename T>
Prediction Model<T>::predict(const Utterance& u, const WorldState& start) const {
  const EncodedExample ex = encode_input(u, start);
  const EncodedExample* ptr = &ex;
  return predict_same_length(std::span<const EncodedExample* const>(&ptr, 1)).front();
}

template <typename T>
std::vector<double> Model<T>::example_losses(std::span<const EncodedExample> batch) const {
  const auto preds = predict_batch(batch);
  std::vector<double> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out.push_back(sequence_nll(preds[i], batch[i].target));
  return out;
}

template <typename T>
double Model<T>::compute_gradients(std::span<const EncodedExample* const> batch, T l2_weight,
                                   Rng* dropout_rng) {
  params_.zero_grad();
  Graph<T> g(params_, true, dropout_rng);
  const NodeId logits = forward(g, batch);
  std::vector<int> targets;
  const int B = static_cast<int>(batch.size());
  targets.reserve(static_cast<std::size_t>(kStateLength * B));
  for (int t = 0; t < kStateLength; ++t) {
    for (const auto* ex : batch) targets.push_back(ex->target[static_cast<std::size_t>(t)]);
  }
  const NodeId data_loss = g.softmax_cross_entropy(logits, targets);
  NodeId loss = data_loss;
  if (l2_weight != T(0)) loss = g.add(loss, g.l2_penalty(l2_weight));
  const double value = static_cast<double>(g.value(data_loss)(0, 0));
  if (!std::isfinite(value) || !std::isfinite(static_cast<double>(g.value(loss)(0, 0)))) {
    throw NumericError("non-finite loss");
  }
  if (params_.any_trainable()) {
    g.backward(loss);
    for (const auto& p : params_) {
      if (p.trainable && !p.grad.allFinite()) throw NumericError("non-finite gradient in " + p.name);
    }
  }
  return value;
}

template class Model<float>;
template class Model<double>;

}  // namespace shrdlurn::nn
