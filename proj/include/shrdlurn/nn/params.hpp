#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "shrdlurn/nn/tensor.hpp"

namespace shrdlurn::nn {

enum class Component : std::uint8_t { encoder, decoder };

template <typename T>
struct Parameter {
  std::string name;
  Component component = Component::encoder;
  bool embedding = false;
  Matrix<T> value;
  Matrix<T> grad;
  bool trainable = true;
  // Per-column trainability for embedding tables; empty means every column.
  std::vector<std::uint8_t> column_mask;

  bool column_trainable(Eigen::Index c) const {
    return column_mask.empty() || column_mask[static_cast<std::size_t>(c)] != 0;
  }
};

template <typename T>
class ParamStore {
 public:
  int add(std::string name, Component component, bool embedding, Matrix<T> init);

  Parameter<T>& operator[](int i) { return params_[static_cast<std::size_t>(i)]; }
  const Parameter<T>& operator[](int i) const { return params_[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(params_.size()); }
  /// Throws std::out_of_range for unknown names.
  int index_of(const std::string& name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Zeroes (allocating if needed) the gradients of trainable parameters.
  void zero_grad();
  void set_trainable(const std::function<bool(const Parameter<T>&)>& pred);
  std::size_t num_values() const;
  bool any_trainable() const;

 private:
  std::vector<Parameter<T>> params_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace shrdlurn::nn
