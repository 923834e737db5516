#pragma once

#include <cmath>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "shrdlurn/datagen.hpp"
#include "shrdlurn/nn/model.hpp"

namespace testutil {

inline const std::vector<std::string> kArchitectures{"seq2seq", "seq2conv", "conv2seq", "conv2conv",
                                                     "bow2seq"};

inline shrdlurn::nn::ModelConfig tiny_config(const std::string& arch) {
  shrdlurn::nn::ModelConfig c;
  std::tie(c.encoder, c.decoder) = shrdlurn::nn::parse_arch(arch);
  c.hidden = 4;
  c.conv_layers = 2;
  c.init_scale = 0.4;
  c.embed_scale = 0.4;
  return c;
}

inline shrdlurn::nn::Vocabulary grammar_vocab() {
  shrdlurn::nn::Vocabulary v(shrdlurn::grammar_vocabulary());
  v.freeze();
  return v;
}

inline std::vector<shrdlurn::ExampleTriple> small_dataset(std::uint64_t seed, std::size_t n) {
  return shrdlurn::generate_split(shrdlurn::make_split(seed), shrdlurn::Split::train, n).examples;
}

inline std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() /
          ("shrdlurn_test_" + std::to_string(::getpid()) + "_" + name))
      .string();
}

/// Largest per-entry relative error between backprop and a five-point
/// central difference of the mean batch loss.
inline double max_gradient_error(shrdlurn::nn::Model<double>& model,
                                 const std::vector<shrdlurn::nn::EncodedExample>& batch) {
  std::vector<const shrdlurn::nn::EncodedExample*> ptrs;
  for (const auto& e : batch) ptrs.push_back(&e);
  model.compute_gradients(ptrs, 0.0, nullptr);
  auto loss = [&] {
    const auto l = model.example_losses(batch);
    double s = 0;
    for (double x : l) s += x;
    return s / static_cast<double>(l.size());
  };
  const double h = 1e-4;
  double worst = 0;
  for (auto& p : model.params()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& v = p.value.data()[i];
      const double orig = v;
      auto at = [&](double x) {
        v = x;
        return loss();
      };
      const double numeric =
          (8 * (at(orig + h) - at(orig - h)) - (at(orig + 2 * h) - at(orig - 2 * h))) / (12 * h);
      v = orig;
      const double analytic = p.grad.data()[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

}  // namespace testutil
