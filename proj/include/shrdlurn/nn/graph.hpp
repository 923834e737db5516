#pragma once

// Reverse-mode differentiation over column-batched matrices.
//
// Sequences are stored time-major: a sequence of `steps` vectors for a
// batch of `batch` items is one matrix with steps * batch columns, where
// column t * batch + b holds step t of item b.

#include <functional>
#include <span>
#include <vector>

#include "shrdlurn/nn/params.hpp"
#include "shrdlurn/rng.hpp"

namespace shrdlurn::nn {

using NodeId = int;

template <typename T>
class Graph {
 public:
  using Mat = Matrix<T>;

  /// With record == false no backward closures are kept (inference).
  /// Dropout is active only when `dropout_rng` is given.
  Graph(ParamStore<T>& params, bool record, Rng* dropout_rng = nullptr);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  NodeId input(Mat value);
  NodeId param(int index);

  const Mat& value(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  NodeId lookup(int param_index, std::span<const int> ids);
  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  /// Adds a column vector to every column.
  NodeId add_bias(NodeId x, NodeId bias);
  NodeId mul(NodeId a, NodeId b);
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  /// First half of the rows gated by the sigmoid of the second half.
  NodeId glu(NodeId a);
  /// Pointwise LSTM update from pre-activations [i; f; g; o]; returns [h; c].
  NodeId lstm_cell(NodeId pre_gates, NodeId c_prev);
  NodeId slice_rows(NodeId a, int start, int count);
  NodeId slice_cols(NodeId a, int start, int count);
  NodeId concat_rows(std::span<const NodeId> parts);
  NodeId concat_cols(std::span<const NodeId> parts);
  /// Same-padded 1-D convolution; weight is out x (kernel * in).
  NodeId conv1d(NodeId x, NodeId weight, NodeId bias, int steps, int batch);
  /// Bilinear attention: score(q, h) = q' W h, softmax over key steps,
  /// context = sum of weighted keys.
  NodeId attention(NodeId queries, NodeId keys, NodeId weight, int query_steps, int key_steps,
                   int batch);
  /// As above with the context taken over `values` instead of the keys.
  NodeId attention(NodeId queries, NodeId keys, NodeId values, NodeId weight, int query_steps,
                   int key_steps, int batch);
  NodeId mean_over_time(NodeId x, int steps, int batch);
  NodeId dropout(NodeId x, double rate);
  /// Mean negative log-likelihood over all columns.
  NodeId softmax_cross_entropy(NodeId logits, std::span<const int> targets);
  /// weight * sum of squares of all trainable parameter entries.
  NodeId l2_penalty(T weight);

  /// Attention weights (key_steps x query_steps*batch) of an attention node.
  const Mat& attention_weights(NodeId id) const;

  void backward(NodeId loss);

 private:
  struct Node {
    Mat value;
    Mat grad;
    int param_index = -1;
    bool requires_grad = false;
    std::function<void()> backward;
    Mat saved;
  };

  Mat& grad(NodeId id);
  NodeId push(Mat value, bool requires_grad);
  bool any_grad(std::initializer_list<NodeId> ids) const;
  Node& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }

  ParamStore<T>& params_;
  bool record_;
  Rng* dropout_rng_;
  std::vector<Node> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace shrdlurn::nn
