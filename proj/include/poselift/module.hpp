#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "poselift/tensor.hpp"

namespace poselift {

// Flat, deterministically ordered view of a model's learnable tensors and
// non-learned buffers (normalization running statistics). Tensors are shared
// handles, so writes through this view reach the model.
struct ParamSet {
  std::vector<std::pair<std::string, ad::Tensor>> params;
  std::vector<std::pair<std::string, std::vector<double>*>> buffers;

  void add(const std::string& name, const ad::Tensor& t) { params.emplace_back(name, t); }
  void add_buffer(const std::string& name, std::vector<double>& b) { buffers.emplace_back(name, &b); }
  std::size_t count() const;
  void set_requires_grad(bool on);
  void zero_grad();
};

// Parameter initializers.
ad::Tensor uniform_param(ad::Shape shape, double bound, std::mt19937_64& rng);
ad::Tensor constant_param(ad::Shape shape, double value);

// Per-call evaluation state shared by every block of a forward pass.
struct RunContext {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

}  // namespace poselift
