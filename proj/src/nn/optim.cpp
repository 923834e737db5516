#include "shrdlurn/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace shrdlurn::nn {

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "'");
}

template <typename T>
void Sgd<T>::step(ParamStore<T>& params) {
  const T lr = static_cast<T>(lr_);
  for (auto& p : params) {
    if (!p.trainable || p.grad.size() == 0) continue;
    if (p.column_mask.empty()) {
      p.value -= lr * p.grad;
    } else {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        if (p.column_trainable(c)) p.value.col(c) -= lr * p.grad.col(c);
      }
    }
  }
}

template <typename T>
void Adam<T>::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
}

template <typename T>
void Adam<T>::step(ParamStore<T>& params) {
  const auto n = static_cast<std::size_t>(params.size());
  if (m_.size() != n) {
    m_.resize(n);
    v_.resize(n);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const T step_size = static_cast<T>(lr_ / c1);
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
  const T sqrt_c2 = static_cast<T>(std::sqrt(c2));
  const T eps = static_cast<T>(eps_);

  for (std::size_t i = 0; i < n; ++i) {
    Parameter<T>& p = params[static_cast<int>(i)];
    if (!p.trainable || p.grad.size() == 0) continue;
    Matrix<T>& m = m_[i];
    Matrix<T>& v = v_[i];
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      // Embedding tables grow by whole columns; new columns start at zero.
      const Eigen::Index old_cols = m.size() == 0 ? 0 : m.cols();
      m.conservativeResize(p.value.rows(), p.value.cols());
      v.conservativeResize(p.value.rows(), p.value.cols());
      m.rightCols(p.value.cols() - old_cols).setZero();
      v.rightCols(p.value.cols() - old_cols).setZero();
    }
    auto update = [&](auto&& value, auto&& grad, auto&& mom, auto&& var) {
      mom = b1 * mom + (T(1) - b1) * grad;
      var = b2 * var + (T(1) - b2) * grad.cwiseAbs2();
      value.array() -= step_size * mom.array() / (var.array().sqrt() / sqrt_c2 + eps);
    };
    if (p.column_mask.empty()) {
      update(p.value, p.grad, m, v);
    } else {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        if (p.column_trainable(c)) update(p.value.col(c), p.grad.col(c), m.col(c), v.col(c));
      }
    }
  }
}

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(OptimizerKind kind, double lr) {
  if (kind == OptimizerKind::sgd) return std::make_unique<Sgd<T>>(lr);
  return std::make_unique<Adam<T>>(lr);
}

template class Sgd<float>;
template class Sgd<double>;
template class Adam<float>;
template class Adam<double>;
template std::unique_ptr<Optimizer<float>> make_optimizer<float>(OptimizerKind, double);
template std::unique_ptr<Optimizer<double>> make_optimizer<double>(OptimizerKind, double);

}  // namespace shrdlurn::nn
