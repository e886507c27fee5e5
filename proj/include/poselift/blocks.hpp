#pragma once

// Learned building blocks: bidirectional Mamba mixer, skeletal graph
// convolution, the graph-enhanced mixer, and the pre-norm encoder wrapper.

#include <optional>
#include <random>
#include <string>

#include "poselift/module.hpp"
#include "poselift/ops.hpp"
#include "poselift/skeleton.hpp"
#include "poselift/ssm.hpp"

namespace poselift {

struct Linear {
  ad::Tensor weight;  // (in, out)
  ad::Tensor bias;    // (out) or undefined

  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool with_bias, std::mt19937_64& rng);
  ad::Tensor forward(const ad::Tensor& x) const { return ad::linear(x, weight, bias); }
  void zero();
  void collect(const std::string& prefix, ParamSet& out);
};

struct LayerNorm {
  ad::Tensor gamma;
  ad::Tensor beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t width);
  ad::Tensor forward(const ad::Tensor& x) const { return ad::layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParamSet& out);
};

enum class GcnActivation { relu, identity };

// relu(x + BN(A_hat x W1 + x W2)) over (B, j, e) inputs.
struct GcnLayer {
  ad::Tensor w1;
  ad::Tensor w2;
  ad::Tensor bn_gamma;
  ad::Tensor bn_beta;
  ad::BatchNormStats bn_stats;
  NormalizedAdjacency adjacency;
  GcnActivation activation = GcnActivation::relu;

  GcnLayer() = default;
  GcnLayer(std::size_t width, NormalizedAdjacency adj, std::mt19937_64& rng);
  ad::Tensor forward(const ad::Tensor& x, const RunContext& ctx);
  void collect(const std::string& prefix, ParamSet& out);
};

enum class BlockKind { vim, gem };
// Where graph convolution enters a GEM block: inside each scan branch
// before the causal convolution, before the whole mixer, or as a parallel
// stream summed with the mixer output.
enum class GcnPlacement { inner, sequential, parallel };

struct BlockConfig {
  std::size_t dim = 64;     // d
  std::size_t expand = 64;  // e
  std::size_t state = 16;   // N
  std::size_t conv_kernel = 4;
  std::size_t dt_rank = 4;
  std::size_t mlp_ratio = 4;
  bool bidirectional = true;
  bool projection_bias = false;  // biases on W_x / W_z
  GcnPlacement placement = GcnPlacement::inner;
  bool branch_norm = true;  // layer norm ahead of the in-branch GCN
};

// One scan direction: SSM(silu(conv([GCN(LN(.))] x))).
struct ScanBranch {
  std::optional<LayerNorm> norm;
  std::optional<GcnLayer> gcn;
  CausalConv1d conv;
  SelectiveSsm ssm;

  ad::Tensor forward(const ad::Tensor& x, const RunContext& ctx);
  void collect(const std::string& prefix, ParamSet& out);
};

// Inner block. `mix` returns (y_f + y_b) W_m; `forward` adds the residual.
struct MambaMixer {
  BlockKind kind = BlockKind::vim;
  GcnPlacement placement = GcnPlacement::inner;
  ad::Tensor w_x;  // (d, e)
  ad::Tensor w_z;  // (d, e)
  ad::Tensor b_x;  // optional
  ad::Tensor b_z;  // optional
  ad::Tensor w_m;  // (e, d)
  ScanBranch forward_branch;
  std::optional<ScanBranch> backward_branch;
  std::optional<GcnLayer> outer_gcn;  // sequential / parallel placements

  MambaMixer() = default;
  // `topo` is required for GEM.
  MambaMixer(BlockKind kind, const BlockConfig& cfg, const SkeletonTopology* topo, std::mt19937_64& rng);

  ad::Tensor mix(const ad::Tensor& x, const RunContext& ctx);
  ad::Tensor forward(const ad::Tensor& x, const RunContext& ctx) { return ad::add(x, mix(x, ctx)); }
  void collect(const std::string& prefix, ParamSet& out);
};

// x' = Mixer(LN(x)) + x ; y' = MLP(LN(x')) + x'
struct EncoderBlock {
  LayerNorm norm1;
  MambaMixer mixer;
  LayerNorm norm2;
  Linear fc1;
  Linear fc2;

  EncoderBlock() = default;
  EncoderBlock(BlockKind kind, const BlockConfig& cfg, const SkeletonTopology* topo, std::mt19937_64& rng);

  // x: (B, l, d)
  ad::Tensor forward(const ad::Tensor& x, const RunContext& ctx);
  void collect(const std::string& prefix, ParamSet& out);
};

}  // namespace poselift
