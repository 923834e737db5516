#pragma once

#include <memory>
#include <string>
#include <vector>

#include "shrdlurn/nn/params.hpp"

namespace shrdlurn::nn {

enum class OptimizerKind : std::uint8_t { sgd, adam };
std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

/// Updates trainable parameters (and trainable embedding columns) in place
/// from their accumulated gradients.
template <typename T>
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParamStore<T>& params) = 0;
  virtual void reset() {}
  virtual std::unique_ptr<Optimizer> clone() const = 0;
};

template <typename T>
class Sgd final : public Optimizer<T> {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(ParamStore<T>& params) override;
  std::unique_ptr<Optimizer<T>> clone() const override { return std::make_unique<Sgd>(*this); }

 private:
  double lr_;
};

/// Adam with bias correction; moment estimates live per parameter and grow
/// with embedding tables.
template <typename T>
class Adam final : public Optimizer<T> {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParamStore<T>& params) override;
  void reset() override;
  std::unique_ptr<Optimizer<T>> clone() const override { return std::make_unique<Adam>(*this); }
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(OptimizerKind kind, double lr);

extern template class Sgd<float>;
extern template class Sgd<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace shrdlurn::nn
