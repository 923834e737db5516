#include "shrdlurn/nn/params.hpp"

#include <stdexcept>

namespace shrdlurn::nn {

template <typename T>
int ParamStore<T>::add(std::string name, Component component, bool embedding, Matrix<T> init) {
  for (const auto& p : params_) {
    if (p.name == name) throw std::invalid_argument("duplicate parameter " + name);
  }
  Parameter<T> p;
  p.name = std::move(name);
  p.component = component;
  p.embedding = embedding;
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

template <typename T>
int ParamStore<T>::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) {
    if (!p.trainable) continue;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      p.grad.setZero(p.value.rows(), p.value.cols());
    } else {
      p.grad.setZero();
    }
  }
}

template <typename T>
void ParamStore<T>::set_trainable(const std::function<bool(const Parameter<T>&)>& pred) {
  for (auto& p : params_) {
    p.trainable = pred(p);
    if (!p.trainable) p.grad.resize(0, 0);
  }
}

template <typename T>
std::size_t ParamStore<T>::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <typename T>
bool ParamStore<T>::any_trainable() const {
  for (const auto& p : params_) {
    if (p.trainable) return true;
  }
  return false;
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace shrdlurn::nn
