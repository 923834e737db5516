#pragma once

// Encoder-decoder models mapping (utterance, start state) to a
// distribution over the 23 target state tokens.
//
// Encoders: lstm (one vector per token), conv (kernel-3 same-padded GLU
// blocks with residuals, one vector per token), bow (mean of word
// embeddings, one vector). Decoders read the start-state tokens and attend
// over the encoder vectors: lstm (Luong-style with input feeding) or conv
// (position embeddings plus GLU blocks, each block attending).

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shrdlurn/blockworld.hpp"
#include "shrdlurn/datagen.hpp"
#include "shrdlurn/nn/graph.hpp"
#include "shrdlurn/nn/vocab.hpp"

namespace shrdlurn::nn {

enum class EncoderKind : std::uint8_t { lstm, conv, bow };
enum class DecoderKind : std::uint8_t { lstm, conv };

std::string_view encoder_name(EncoderKind k);
std::string_view decoder_name(DecoderKind k);
EncoderKind parse_encoder(std::string_view s);
DecoderKind parse_decoder(std::string_view s);
/// seq2seq, seq2conv, conv2seq, conv2conv, bow2seq (bow2conv also accepted).
std::string arch_name(EncoderKind e, DecoderKind d);
std::pair<EncoderKind, DecoderKind> parse_arch(std::string_view name);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::lstm;
  DecoderKind decoder = DecoderKind::conv;
  int hidden = 64;  // also the embedding size
  int lstm_layers = 1;
  int conv_layers = 4;
  int kernel = 3;
  double dropout = 0.0;
  double init_scale = 0.08;
  double embed_scale = 0.1;

  std::string arch() const { return arch_name(encoder, decoder); }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EncodedExample {
  std::vector<int> utterance;
  std::array<int, kStateLength> start{};
  std::array<int, kStateLength> target{};
};

struct Prediction {
  Matrix<double> probs;  // kNumStateTokens x kStateLength
  std::array<int, kStateLength> tokens{};
};

/// Mean over positions of -log p(target token).
double sequence_nll(const Prediction& p, std::span<const int> target);

template <typename T>
class Model {
 public:
  struct Encoded {
    NodeId keys = -1;
    NodeId values = -1;  // keys plus the word embeddings
    int steps = 0;
    std::vector<NodeId> final_h;
    std::vector<NodeId> final_c;
  };

  Model(ModelConfig config, Vocabulary vocab, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  /// Throws UnknownToken for words without an id.
  EncodedExample encode_input(const Utterance& u, const WorldState& start) const;
  EncodedExample encode_example(const ExampleTriple& ex) const;

  /// All utterances in `batch` must have the same length.
  Encoded encode(Graph<T>& g, std::span<const EncodedExample* const> batch) const;
  NodeId decode(Graph<T>& g, const Encoded& enc, std::span<const EncodedExample* const> batch) const;
  /// Logits, kNumStateTokens x (kStateLength * batch), time-major.
  NodeId forward(Graph<T>& g, std::span<const EncodedExample* const> batch) const;

  /// Encoder vectors h_1..h_m as columns.
  Matrix<T> hidden_states(const Utterance& u) const;
  Prediction predict(const Utterance& u, const WorldState& start) const;
  /// Any mix of utterance lengths; results follow input order.
  std::vector<Prediction> predict_batch(std::span<const EncodedExample> batch) const;
  std::vector<double> example_losses(std::span<const EncodedExample> batch) const;

  /// Zeroes gradients, runs forward and backward. Returns the data loss
  /// (without the L2 term). Throws NumericError on non-finite values.
  double compute_gradients(std::span<const EncodedExample* const> batch, T l2_weight,
                           Rng* dropout_rng);

  /// Redraws every parameter of one component from `seed`.
  void reinitialize(Component which, std::uint64_t seed);
  /// Appends embedding columns for unseen words; existing columns untouched.
  std::vector<int> register_new_words(std::span<const std::string> words, std::uint64_t seed);
  int word_embedding_param() const { return enc_embed_; }
  Vector<T> word_embedding(const std::string& word) const;

 private:
  struct LstmLayer {
    int wx = -1, wf = -1, wh = -1, b = -1;
  };
  struct ConvLayer {
    int w = -1, b = -1, att = -1, proj_w = -1, proj_b = -1;
  };

  void build();
  void init_param(Parameter<T>& p, std::uint64_t seed) const;
  std::vector<Prediction> predict_same_length(std::span<const EncodedExample* const> batch) const;

  ModelConfig config_;
  Vocabulary vocab_;
  ParamStore<T> params_;

  int enc_embed_ = -1;
  std::vector<LstmLayer> enc_lstm_;
  std::vector<ConvLayer> enc_conv_;

  int dec_embed_ = -1;
  int dec_pos_ = -1;
  std::vector<LstmLayer> dec_lstm_;
  std::vector<ConvLayer> dec_conv_;
  int dec_att_ = -1;
  int comb_w_ = -1, comb_b_ = -1;
  int out_w_ = -1, out_b_ = -1;
};

extern template class Model<float>;
extern template class Model<double>;

/// u.v / (|u||v|); throws std::invalid_argument for a zero vector.
double cosine(std::span<const double> u, std::span<const double> v);

}  // namespace shrdlurn::nn
