#pragma once

// Selective state space kernel: zero-order-hold discretization, the ordered
// selective scan, depthwise causal convolution and sequence reversal.
// Sequence tensors are laid out (batch, length, channels).

#include <random>
#include <span>
#include <string>
#include <vector>

#include "poselift/module.hpp"
#include "poselift/tensor.hpp"

namespace poselift {

struct DiscretizedStep {
  double a_bar;
  double b_bar;
};

// Zero-order hold for one diagonal entry: a_bar = exp(delta a),
// b_bar = (delta a)^-1 (exp(delta a) - 1) delta b, with b_bar = delta b when
// |delta a| < 1e-8.
DiscretizedStep discretize(double a, double b, double delta);

// Plain-array selective scan over one sequence, h_0 = 0.
//   x, delta: (length x channels); a: (channels x state), entries < 0;
//   b, c: (length x state).
std::vector<double> selective_scan(std::span<const double> x, std::span<const double> delta,
                                   std::span<const double> a, std::span<const double> b,
                                   std::span<const double> c, std::size_t length,
                                   std::size_t channels, std::size_t state);

// Plain-array depthwise causal convolution: kernel (channels x k), bias
// (channels); k - 1 zeros of left padding.
std::vector<double> causal_conv1d(std::span<const double> x, std::span<const double> kernel,
                                  std::span<const double> bias, std::size_t length,
                                  std::size_t channels, std::size_t k);

namespace ad {

// Differentiable scan. u, delta: (B, l, e); a_log: (e, N) with A = -exp(a_log);
// b, c: (B, l, N). Returns (B, l, e).
Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& a_log, const Tensor& b,
                      const Tensor& c);
// x: (B, l, e); kernel (e, k); bias (e).
Tensor causal_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias);
// Reverses axis 1 of a (B, l, C) tensor.
Tensor flip_sequence(const Tensor& x);

}  // namespace ad

struct CausalConv1d {
  ad::Tensor kernel;  // (e, k)
  ad::Tensor bias;    // (e)

  CausalConv1d() = default;
  CausalConv1d(std::size_t channels, std::size_t k, std::mt19937_64& rng);
  ad::Tensor forward(const ad::Tensor& x) const { return ad::causal_conv1d(x, kernel, bias); }
  void collect(const std::string& prefix, ParamSet& out);
};

// Selection mechanism: delta, B and C are linear functions of the scanned
// input; delta goes through a rank-r bottleneck and a softplus with bias.
struct SelectiveSsm {
  ad::Tensor a_log;    // (e, N)
  ad::Tensor dt_down;  // (e, r)
  ad::Tensor dt_up;    // (r, e)
  ad::Tensor dt_bias;  // (e)
  ad::Tensor w_b;      // (e, N)
  ad::Tensor w_c;      // (e, N)

  SelectiveSsm() = default;
  SelectiveSsm(std::size_t channels, std::size_t state, std::size_t dt_rank, std::mt19937_64& rng);
  std::size_t channels() const { return a_log.dim(0); }
  std::size_t state() const { return a_log.dim(1); }

  ad::Tensor delta(const ad::Tensor& u) const;
  ad::Tensor forward(const ad::Tensor& u) const;
  void collect(const std::string& prefix, ParamSet& out);
};

}  // namespace poselift
