#include "shrdlurn/nn/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace shrdlurn::nn {

namespace {

template <typename M>
using ScalarPtr = std::conditional_t<std::is_const_v<M>, const typename M::Scalar*, typename M::Scalar*>;

template <typename M>
auto strided_cols(ScalarPtr<M> data, Eigen::Index rows, Eigen::Index cols, Eigen::Index stride) {
  return Eigen::Map<M, 0, Eigen::OuterStride<>>(data, rows, cols, Eigen::OuterStride<>(stride));
}

}  // namespace

template <typename T>
Graph<T>::Graph(ParamStore<T>& params, bool record, Rng* dropout_rng)
    : params_(params), record_(record), dropout_rng_(dropout_rng) {
  nodes_.reserve(512);
}

template <typename T>
NodeId Graph<T>::push(Mat value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_ && requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

template <typename T>
bool Graph<T>::any_grad(std::initializer_list<NodeId> ids) const {
  if (!record_) return false;
  for (NodeId id : ids) {
    if (node(id).requires_grad) return true;
  }
  return false;
}

template <typename T>
const typename Graph<T>::Mat& Graph<T>::value(NodeId id) const {
  const Node& n = node(id);
  return n.param_index >= 0 ? params_[n.param_index].value : n.value;
}

template <typename T>
typename Graph<T>::Mat& Graph<T>::grad(NodeId id) {
  Node& n = node(id);
  Mat& g = n.param_index >= 0 ? params_[n.param_index].grad : n.grad;
  const Mat& v = value(id);
  if (g.rows() != v.rows() || g.cols() != v.cols()) g.setZero(v.rows(), v.cols());
  return g;
}

template <typename T>
NodeId Graph<T>::input(Mat value) {
  return push(std::move(value), false);
}

template <typename T>
NodeId Graph<T>::param(int index) {
  NodeId id = push(Mat(), params_[index].trainable);
  node(id).param_index = index;
  return id;
}

template <typename T>
NodeId Graph<T>::lookup(int param_index, std::span<const int> ids) {
  const Mat& table = params_[param_index].value;
  Mat out(table.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= table.cols()) {
      throw std::out_of_range("embedding id " + std::to_string(ids[j]) + " out of range for " +
                              params_[param_index].name);
    }
    out.col(static_cast<Eigen::Index>(j)) = table.col(ids[j]);
  }
  const NodeId id = push(std::move(out), params_[param_index].trainable);
  if (node(id).requires_grad) {
    std::vector<int> idv(ids.begin(), ids.end());
    node(id).backward = [this, id, param_index, idv = std::move(idv)] {
      Parameter<T>& p = params_[param_index];
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
        p.grad.setZero(p.value.rows(), p.value.cols());
      }
      const Mat& g = node(id).grad;
      for (std::size_t j = 0; j < idv.size(); ++j) {
        if (p.column_trainable(idv[j])) p.grad.col(idv[j]) += g.col(static_cast<Eigen::Index>(j));
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::matmul(NodeId a, NodeId b) {
  if (value(a).cols() != value(b).rows()) throw std::invalid_argument("matmul shape mismatch");
  Mat out;
  out.noalias() = value(a) * value(b);
  const NodeId id = push(std::move(out), any_grad({a, b}));
  if (node(id).requires_grad) {
    node(id).backward = [this, id, a, b] {
      const Mat& g = node(id).grad;
      if (node(a).requires_grad) grad(a).noalias() += g * value(b).transpose();
      if (node(b).requires_grad) grad(b).noalias() += value(a).transpose() * g;
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::add(NodeId a, NodeId b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw std::invalid_argument("add shape mismatch");
  }
  const NodeId id = push(value(a) + value(b), any_grad({a, b}));
  if (node(id).requires_grad) {
    node(id).backward = [this, id, a, b] {
      if (node(a).requires_grad) grad(a) += node(id).grad;
      if (node(b).requires_grad) grad(b) += node(id).grad;
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::add_bias(NodeId x, NodeId bias) {
  if (value(bias).cols() != 1 || value(bias).rows() != value(x).rows()) {
    throw std::invalid_argument("bias shape mismatch");
  }
  Mat out = value(x).colwise() + value(bias).col(0);
  const NodeId id = push(std::move(out), any_grad({x, bias}));
  if (node(id).requires_grad) {
    node(id).backward = [this, id, x, bias] {
      const Mat& g = node(id).grad;
      if (node(x).requires_grad) grad(x) += g;
      if (node(bias).requires_grad) grad(bias) += g.rowwise().sum();
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::mul(NodeId a, NodeId b) {
  const NodeId id = push(value(a).cwiseProduct(value(b)), any_grad({a, b}));
  if (node(id).requires_grad) {
    node(id).backward = [this, id, a, b] {
      const Mat& g = node(id).grad;
      if (node(a).requires_grad) grad(a) += g.cwiseProduct(value(b));
      if (node(b).requires_grad) grad(b) += g.cwiseProduct(value(a));
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::tanh(NodeId a) {
  const NodeId id = push(value(a).array().tanh().matrix(), any_grad({a}));
  if (node(id).requires_grad) {
    node(id).backward = [this, id, a] {
      const Mat& y = node(id).value;
      grad(a).array() += node(id).grad.array() * (T(1) - y.array().square());
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::sigmoid(NodeId a) {
  Mat y = (T(1) / (T(1) + (-value(a).array()).exp())).matrix();
  const NodeId id = push(std::move(y), any_grad({a}));
  if (node(id).requires_grad) {
    node(id).backward = [this, id, a] {
      const Mat& y = node(id).value;
      grad(a).array() += node(id).grad.array() * y.array() * (T(1) - y.array());
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::glu(NodeId a) {
  const Mat& in = value(a);
  if (in.rows() % 2 != 0) throw std::invalid_argument("glu needs an even row count");
  const Eigen::Index h = in.rows() / 2;
  Mat gate = (T(1) / (T(1) + (-in.bottomRows(h).array()).exp())).matrix();
  Mat out = in.topRows(h).cwiseProduct(gate);
  const NodeId id = push(std::move(out), any_grad({a}));
  if (node(id).requires_grad) {
    node(id).saved = std::move(gate);
    node(id).backward = [this, id, a, h] {
      const Mat& g = node(id).grad;
      const Mat& gate = node(id).saved;
      Mat& ga = grad(a);
      ga.topRows(h).array() += g.array() * gate.array();
      ga.bottomRows(h).array() +=
          g.array() * value(a).topRows(h).array() * gate.array() * (T(1) - gate.array());
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::lstm_cell(NodeId pre_gates, NodeId c_prev) {
  const Mat& pre = value(pre_gates);
  const Mat& cp = value(c_prev);
  const Eigen::Index d = cp.rows();
  if (pre.rows() != 4 * d || pre.cols() != cp.cols()) {
    throw std::invalid_argument("lstm_cell shape mismatch");
  }
  const Eigen::Index n = cp.cols();
  // acts = [i; f; g; o; tanh(c)]
  Mat acts(5 * d, n);
  auto sig = [](const auto& x) { return (T(1) / (T(1) + (-x.array()).exp())).matrix(); };
  acts.middleRows(0, d) = sig(pre.middleRows(0, d));
  acts.middleRows(d, d) = sig(pre.middleRows(d, d));
  acts.middleRows(2 * d, d) = pre.middleRows(2 * d, d).array().tanh().matrix();
  acts.middleRows(3 * d, d) = sig(pre.middleRows(3 * d, d));
  Mat out(2 * d, n);
  out.bottomRows(d) = acts.middleRows(d, d).cwiseProduct(cp) +
                      acts.middleRows(0, d).cwiseProduct(acts.middleRows(2 * d, d));
  acts.middleRows(4 * d, d) = out.bottomRows(d).array().tanh().matrix();
  out.topRows(d) = acts.middleRows(3 * d, d).cwiseProduct(acts.middleRows(4 * d, d));
  const NodeId id = push(std::move(out), any_grad({pre_gates, c_prev}));
  if (node(id).requires_grad) {
    node(id).saved = std::move(acts);
    node(id).backward = [this, id, pre_gates, c_prev, d] {
      const Mat& g = node(id).grad;
      const Mat& acts = node(id).saved;
      const auto i = acts.middleRows(0, d).array();
      const auto f = acts.middleRows(d, d).array();
      const auto gg = acts.middleRows(2 * d, d).array();
      const auto o = acts.middleRows(3 * d, d).array();
      const auto tc = acts.middleRows(4 * d, d).array();
      const auto dh = g.topRows(d).array();
      Mat dc = (g.bottomRows(d).array() + dh * o * (T(1) - tc.square())).matrix();
      if (node(pre_gates).requires_grad) {
        Mat& gp = grad(pre_gates);
        const auto cp = value(c_prev).array();
        gp.middleRows(0, d).array() += dc.array() * gg * i * (T(1) - i);
        gp.middleRows(d, d).array() += dc.array() * cp * f * (T(1) - f);
        gp.middleRows(2 * d, d).array() += dc.array() * i * (T(1) - gg.square());
        gp.middleRows(3 * d, d).array() += dh * tc * o * (T(1) - o);
      }
      if (node(c_prev).requires_grad) grad(c_prev).array() += dc.array() * f;
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::slice_rows(NodeId a, int start, int count) {
  const NodeId id = push(value(a).middleRows(start, count), any_grad({a}));
  if (node(id).requires_grad) {
    node(id).backward = [this, id, a, start, count] {
      grad(a).middleRows(start, count) += node(id).grad;
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::slice_cols(NodeId a, int start, int count) {
  const NodeId id = push(value(a).middleCols(start, count), any_grad({a}));
  if (node(id).requires_grad) {
    node(id).backward = [this, id, a, start, count] {
      grad(a).middleCols(start, count) += node(id).grad;
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::concat_rows(std::span<const NodeId> parts) {
  Eigen::Index rows = 0;
  const Eigen::Index cols = value(parts[0]).cols();
  bool rg = false;
  for (NodeId p : parts) {
    if (value(p).cols() != cols) throw std::invalid_argument("concat_rows mismatch");
    rows += value(p).rows();
    rg = rg || node(p).requires_grad;
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (NodeId p : parts) {
    out.middleRows(r, value(p).rows()) = value(p);
    r += value(p).rows();
  }
  const NodeId id = push(std::move(out), rg);
  if (node(id).requires_grad) {
    std::vector<NodeId> pv(parts.begin(), parts.end());
    node(id).backward = [this, id, pv = std::move(pv)] {
      Eigen::Index r = 0;
      for (NodeId p : pv) {
        const Eigen::Index n = value(p).rows();
        if (node(p).requires_grad) grad(p) += node(id).grad.middleRows(r, n);
        r += n;
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::concat_cols(std::span<const NodeId> parts) {
  Eigen::Index cols = 0;
  const Eigen::Index rows = value(parts[0]).rows();
  bool rg = false;
  for (NodeId p : parts) {
    if (value(p).rows() != rows) throw std::invalid_argument("concat_cols mismatch");
    cols += value(p).cols();
    rg = rg || node(p).requires_grad;
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (NodeId p : parts) {
    out.middleCols(c, value(p).cols()) = value(p);
    c += value(p).cols();
  }
  const NodeId id = push(std::move(out), rg);
  if (node(id).requires_grad) {
    std::vector<NodeId> pv(parts.begin(), parts.end());
    node(id).backward = [this, id, pv = std::move(pv)] {
      Eigen::Index c = 0;
      for (NodeId p : pv) {
        const Eigen::Index n = value(p).cols();
        if (node(p).requires_grad) grad(p) += node(id).grad.middleCols(c, n);
        c += n;
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::conv1d(NodeId x, NodeId weight, NodeId bias, int steps, int batch) {
  const Mat& in = value(x);
  const Mat& w = value(weight);
  const Eigen::Index c_in = in.rows();
  if (in.cols() != static_cast<Eigen::Index>(steps) * batch || w.cols() % c_in != 0) {
    throw std::invalid_argument("conv1d shape mismatch");
  }
  const int kernel = static_cast<int>(w.cols() / c_in);
  if (kernel % 2 == 0) throw std::invalid_argument("conv1d needs an odd kernel");
  const int half = kernel / 2;
  Mat cols = Mat::Zero(kernel * c_in, in.cols());
  for (int j = 0; j < kernel; ++j) {
    const int offset = j - half;
    for (int t = 0; t < steps; ++t) {
      const int src = t + offset;
      if (src < 0 || src >= steps) continue;
      cols.block(j * c_in, static_cast<Eigen::Index>(t) * batch, c_in, batch) =
          in.middleCols(static_cast<Eigen::Index>(src) * batch, batch);
    }
  }
  Mat out;
  out.noalias() = w * cols;
  out.colwise() += value(bias).col(0);
  const NodeId id = push(std::move(out), any_grad({x, weight, bias}));
  if (node(id).requires_grad) {
    node(id).saved = std::move(cols);
    node(id).backward = [this, id, x, weight, bias, steps, batch, kernel, half, c_in] {
      const Mat& g = node(id).grad;
      const Mat& cols = node(id).saved;
      if (node(weight).requires_grad) grad(weight).noalias() += g * cols.transpose();
      if (node(bias).requires_grad) grad(bias) += g.rowwise().sum();
      if (node(x).requires_grad) {
        Mat dcols;
        dcols.noalias() = value(weight).transpose() * g;
        Mat& gx = grad(x);
        for (int j = 0; j < kernel; ++j) {
          const int offset = j - half;
          for (int t = 0; t < steps; ++t) {
            const int src = t + offset;
            if (src < 0 || src >= steps) continue;
            gx.middleCols(static_cast<Eigen::Index>(src) * batch, batch) +=
                dcols.block(j * c_in, static_cast<Eigen::Index>(t) * batch, c_in, batch);
          }
        }
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::attention(NodeId queries, NodeId keys, NodeId weight, int query_steps,
                           int key_steps, int batch) {
  return attention(queries, keys, keys, weight, query_steps, key_steps, batch);
}

template <typename T>
NodeId Graph<T>::attention(NodeId queries, NodeId keys, NodeId values, NodeId weight,
                           int query_steps, int key_steps, int batch) {
  const Mat& q = value(queries);
  const Mat& h = value(keys);
  const Mat& v = value(values);
  const Mat& w = value(weight);
  const Eigen::Index dq = q.rows();
  const Eigen::Index dh = h.rows();
  const Eigen::Index dv = v.rows();
  if (w.rows() != dq || w.cols() != dh ||
      q.cols() != static_cast<Eigen::Index>(query_steps) * batch ||
      h.cols() != static_cast<Eigen::Index>(key_steps) * batch || v.cols() != h.cols()) {
    throw std::invalid_argument("attention shape mismatch");
  }
  Mat wh;
  wh.noalias() = w * h;
  Mat alpha(key_steps, static_cast<Eigen::Index>(query_steps) * batch);
  Mat out(dv, static_cast<Eigen::Index>(query_steps) * batch);
  for (int b = 0; b < batch; ++b) {
    auto qb = strided_cols<const Mat>(q.data() + b * dq, dq, query_steps, batch * dq);
    auto vb = strided_cols<const Mat>(v.data() + b * dv, dv, key_steps, batch * dv);
    auto whb = strided_cols<const Mat>(wh.data() + b * dq, dq, key_steps, batch * dq);
    auto ab = strided_cols<Mat>(alpha.data() + b * key_steps, key_steps, query_steps,
                                batch * key_steps);
    auto ob = strided_cols<Mat>(out.data() + b * dv, dv, query_steps, batch * dv);
    Mat scores = whb.transpose() * qb;  // key_steps x query_steps
    for (Eigen::Index t = 0; t < scores.cols(); ++t) {
      auto col = scores.col(t);
      const T mx = col.maxCoeff();
      col = (col.array() - mx).exp().matrix();
      col /= col.sum();
    }
    ab = scores;
    ob.noalias() = vb * scores;
  }
  const NodeId id = push(std::move(out), any_grad({queries, keys, values, weight}));
  node(id).saved = std::move(alpha);
  if (node(id).requires_grad) {
    node(id).backward = [this, id, queries, keys, values, weight, query_steps, key_steps, batch,
                         wh = std::move(wh)] {
      const Mat& g = node(id).grad;
      const Mat& alpha = node(id).saved;
      const Mat& q = value(queries);
      const Mat& h = value(keys);
      const Mat& v = value(values);
      const Eigen::Index dq = q.rows();
      const Eigen::Index dv = v.rows();
      const bool need_q = node(queries).requires_grad;
      const bool need_h = node(keys).requires_grad;
      const bool need_v = node(values).requires_grad;
      const bool need_w = node(weight).requires_grad;
      Mat dwh = Mat::Zero(wh.rows(), wh.cols());
      Mat* gq = need_q ? &grad(queries) : nullptr;
      Mat* gv = need_v ? &grad(values) : nullptr;
      for (int b = 0; b < batch; ++b) {
        auto qb = strided_cols<const Mat>(q.data() + b * dq, dq, query_steps, batch * dq);
        auto vb = strided_cols<const Mat>(v.data() + b * dv, dv, key_steps, batch * dv);
        auto whb = strided_cols<const Mat>(wh.data() + b * dq, dq, key_steps, batch * dq);
        auto ab = strided_cols<const Mat>(alpha.data() + b * key_steps, key_steps, query_steps,
                                          batch * key_steps);
        auto gb = strided_cols<const Mat>(g.data() + b * dv, dv, query_steps, batch * dv);
        Mat dalpha = vb.transpose() * gb;  // key_steps x query_steps
        Mat ds = ab.cwiseProduct(dalpha);
        const Eigen::Matrix<T, 1, Eigen::Dynamic> totals = ds.colwise().sum();
        ds -= ab * totals.asDiagonal();
        if (gq) {
          auto gqb = strided_cols<Mat>(gq->data() + b * dq, dq, query_steps, batch * dq);
          gqb.noalias() += whb * ds;
        }
        auto dwhb = strided_cols<Mat>(dwh.data() + b * dq, dq, key_steps, batch * dq);
        dwhb.noalias() += qb * ds.transpose();
        if (gv) {
          auto gvb = strided_cols<Mat>(gv->data() + b * dv, dv, key_steps, batch * dv);
          gvb.noalias() += gb * ab.transpose();
        }
      }
      if (need_w) grad(weight).noalias() += dwh * h.transpose();
      if (need_h) grad(keys).noalias() += value(weight).transpose() * dwh;
    };
  }
  return id;
}

template <typename T>
const typename Graph<T>::Mat& Graph<T>::attention_weights(NodeId id) const {
  return node(id).saved;
}

template <typename T>
NodeId Graph<T>::mean_over_time(NodeId x, int steps, int batch) {
  const Mat& in = value(x);
  Mat out = Mat::Zero(in.rows(), batch);
  for (int t = 0; t < steps; ++t) out += in.middleCols(static_cast<Eigen::Index>(t) * batch, batch);
  out /= static_cast<T>(steps);
  const NodeId id = push(std::move(out), any_grad({x}));
  if (node(id).requires_grad) {
    node(id).backward = [this, id, x, steps, batch] {
      const Mat share = node(id).grad / static_cast<T>(steps);
      Mat& gx = grad(x);
      for (int t = 0; t < steps; ++t) gx.middleCols(static_cast<Eigen::Index>(t) * batch, batch) += share;
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::dropout(NodeId x, double rate) {
  if (dropout_rng_ == nullptr || rate <= 0.0) return x;
  const Mat& in = value(x);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Mat mask(in.rows(), in.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = dropout_rng_->unit() < rate ? T(0) : keep_scale;
  }
  const NodeId id = push(in.cwiseProduct(mask), any_grad({x}));
  if (node(id).requires_grad) {
    node(id).saved = std::move(mask);
    node(id).backward = [this, id, x] {
      grad(x) += node(id).grad.cwiseProduct(node(id).saved);
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::softmax_cross_entropy(NodeId logits, std::span<const int> targets) {
  const Mat& z = value(logits);
  if (z.cols() != static_cast<Eigen::Index>(targets.size())) {
    throw std::invalid_argument("softmax_cross_entropy target count mismatch");
  }
  Mat probs(z.rows(), z.cols());
  double total = 0.0;
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const T mx = z.col(c).maxCoeff();
    probs.col(c) = (z.col(c).array() - mx).exp().matrix();
    const T sum = probs.col(c).sum();
    probs.col(c) /= sum;
    const int t = targets[static_cast<std::size_t>(c)];
    total -= static_cast<double>(z(t, c) - mx - std::log(sum));
  }
  Mat out(1, 1);
  out(0, 0) = static_cast<T>(total / static_cast<double>(z.cols()));
  const NodeId id = push(std::move(out), any_grad({logits}));
  node(id).saved = std::move(probs);
  if (node(id).requires_grad) {
    std::vector<int> tv(targets.begin(), targets.end());
    node(id).backward = [this, id, logits, tv = std::move(tv)] {
      const T scale = node(id).grad(0, 0) / static_cast<T>(tv.size());
      Mat d = node(id).saved;
      for (std::size_t c = 0; c < tv.size(); ++c) d(tv[c], static_cast<Eigen::Index>(c)) -= T(1);
      grad(logits) += scale * d;
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::l2_penalty(T weight) {
  double total = 0.0;
  bool any = false;
  for (const auto& p : params_) {
    if (!p.trainable) continue;
    any = true;
    if (p.column_mask.empty()) {
      total += static_cast<double>(p.value.squaredNorm());
    } else {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        if (p.column_trainable(c)) total += static_cast<double>(p.value.col(c).squaredNorm());
      }
    }
  }
  Mat out(1, 1);
  out(0, 0) = static_cast<T>(static_cast<double>(weight) * total);
  const NodeId id = push(std::move(out), any && weight != T(0));
  if (node(id).requires_grad) {
    node(id).backward = [this, id, weight] {
      const T scale = T(2) * weight * node(id).grad(0, 0);
      for (auto& p : params_) {
        if (!p.trainable) continue;
        if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
          p.grad.setZero(p.value.rows(), p.value.cols());
        }
        if (p.column_mask.empty()) {
          p.grad += scale * p.value;
        } else {
          for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
            if (p.column_trainable(c)) p.grad.col(c) += scale * p.value.col(c);
          }
        }
      }
    };
  }
  return id;
}

template <typename T>
void Graph<T>::backward(NodeId loss) {
  if (!record_) throw std::logic_error("backward on a graph built without recording");
  if (value(loss).size() != 1) throw std::invalid_argument("backward needs a scalar loss");
  grad(loss).setOnes();
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = node(id);
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward();
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace shrdlurn::nn
