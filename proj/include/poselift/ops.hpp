#pragma once

#include <random>
#include <span>
#include <vector>

#include "poselift/tensor.hpp"

namespace poselift::ad {

// Elementwise arithmetic. `b` must equal `a` in shape or match a trailing
// suffix of it (broadcast over the leading axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Same-shape Hadamard product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// (..., in) x (in, out) -> (..., out). `bias` may be undefined.
Tensor matmul(const Tensor& x, const Tensor& weight);
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor softplus(const Tensor& x);

// Normalizes over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel normalization over every axis but the last. Training mode uses
// batch statistics and updates `stats`; evaluation mode reads them.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  bool training);

Tensor softmax(const Tensor& x);  // over the last axis

// (a, b, c, d) -> (a, c, b, d)
Tensor transpose12(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_last(const Tensor& a, const Tensor& b);

// alpha (..., 2), s and t (..., D): alpha0 * s + alpha1 * t.
Tensor mix2(const Tensor& alpha, const Tensor& s, const Tensor& t);

// x (B, j, C) mixed along the joint axis: out[b, i, :] = sum_k adj[i, k] x[b, k, :].
Tensor graph_mix(const Tensor& x, std::span<const double> adjacency);

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Mean categorical cross-entropy of softmax(logits) against integer labels,
// one label per row of the last axis.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace poselift::ad
