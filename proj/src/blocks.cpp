#include "poselift/blocks.hpp"

#include <cmath>

namespace poselift {

namespace {

ad::Tensor maybe_dropout(const ad::Tensor& x, const RunContext& ctx) {
  if (!ctx.training || ctx.dropout <= 0.0) return x;
  require(ctx.rng != nullptr, "training with dropout needs a random generator");
  return ad::dropout(x, ctx.dropout, *ctx.rng);
}

}  // namespace

Linear::Linear(std::size_t in, std::size_t out, bool with_bias, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = uniform_param({in, out}, bound, rng);
  if (with_bias) bias = uniform_param({out}, bound, rng);
}

void Linear::zero() {
  for (auto& v : weight.mutable_data()) v = 0.0;
  if (bias.defined())
    for (auto& v : bias.mutable_data()) v = 0.0;
}

void Linear::collect(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".weight", weight);
  if (bias.defined()) out.add(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(std::size_t width)
    : gamma(constant_param({width}, 1.0)), beta(constant_param({width}, 0.0)) {}

void LayerNorm::collect(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".gamma", gamma);
  out.add(prefix + ".beta", beta);
}

GcnLayer::GcnLayer(std::size_t width, NormalizedAdjacency adj, std::mt19937_64& rng)
    : bn_gamma(constant_param({width}, 1.0)),
      bn_beta(constant_param({width}, 0.0)),
      adjacency(std::move(adj)) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  w1 = uniform_param({width, width}, bound, rng);
  w2 = uniform_param({width, width}, bound, rng);
  bn_stats.running_mean.assign(width, 0.0);
  bn_stats.running_var.assign(width, 1.0);
}

ad::Tensor GcnLayer::forward(const ad::Tensor& x, const RunContext& ctx) {
  require(x.rank() == 3 && x.dim(1) == adjacency.joints,
          "graph convolution is defined over joints: sequence length " +
              std::to_string(x.rank() == 3 ? x.dim(1) : 0) + " != " +
              std::to_string(adjacency.joints));
  auto neighbours = ad::graph_mix(ad::matmul(x, w1), adjacency.matrix);
  auto pre = ad::add(neighbours, ad::matmul(x, w2));
  auto normed = ad::batch_norm(pre, bn_gamma, bn_beta, bn_stats, ctx.training);
  auto sum = ad::add(x, normed);
  return activation == GcnActivation::relu ? ad::relu(sum) : sum;
}

void GcnLayer::collect(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".W1", w1);
  out.add(prefix + ".W2", w2);
  out.add(prefix + ".bn.gamma", bn_gamma);
  out.add(prefix + ".bn.beta", bn_beta);
  out.add_buffer(prefix + ".bn.running_mean", bn_stats.running_mean);
  out.add_buffer(prefix + ".bn.running_var", bn_stats.running_var);
}

ad::Tensor ScanBranch::forward(const ad::Tensor& x, const RunContext& ctx) {
  ad::Tensor h = x;
  if (norm) h = norm->forward(h);
  if (gcn) h = gcn->forward(h, ctx);
  return ssm.forward(ad::silu(conv.forward(h)));
}

void ScanBranch::collect(const std::string& prefix, ParamSet& out) {
  if (norm) norm->collect(prefix + ".norm", out);
  if (gcn) gcn->collect(prefix + ".gcn", out);
  conv.collect(prefix + ".conv", out);
  ssm.collect(prefix + ".ssm", out);
}

MambaMixer::MambaMixer(BlockKind kind_, const BlockConfig& cfg, const SkeletonTopology* topo,
                       std::mt19937_64& rng)
    : kind(kind_), placement(cfg.placement) {
  require(kind == BlockKind::vim || topo != nullptr, "a GEM block needs a skeleton topology");
  const std::size_t d = cfg.dim, e = cfg.expand;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  w_x = uniform_param({d, e}, bound, rng);
  w_z = uniform_param({d, e}, bound, rng);
  if (cfg.projection_bias) {
    b_x = uniform_param({e}, bound, rng);
    b_z = uniform_param({e}, bound, rng);
  }
  w_m = uniform_param({e, d}, 1.0 / std::sqrt(static_cast<double>(e)), rng);

  auto make_branch = [&](AdjacencyDirection dir) {
    ScanBranch br;
    if (kind == BlockKind::gem && placement == GcnPlacement::inner) {
      if (cfg.branch_norm) br.norm = LayerNorm(e);
      br.gcn = GcnLayer(e, build_adjacency(*topo, dir), rng);
    }
    br.conv = CausalConv1d(e, cfg.conv_kernel, rng);
    br.ssm = SelectiveSsm(e, cfg.state, cfg.dt_rank, rng);
    return br;
  };
  forward_branch = make_branch(AdjacencyDirection::forward);
  if (cfg.bidirectional) backward_branch = make_branch(AdjacencyDirection::backward);
  if (kind == BlockKind::gem && placement != GcnPlacement::inner)
    outer_gcn = GcnLayer(d, build_adjacency(*topo, AdjacencyDirection::forward), rng);
}

ad::Tensor MambaMixer::mix(const ad::Tensor& x, const RunContext& ctx) {
  const ad::Tensor input =
      (outer_gcn && placement == GcnPlacement::sequential) ? outer_gcn->forward(x, ctx) : x;
  const auto x_hat = ad::linear(input, w_x, b_x);
  const auto gate = ad::silu(ad::linear(input, w_z, b_z));
  auto y = ad::mul(forward_branch.forward(x_hat, ctx), gate);
  if (backward_branch) {
    auto back = ad::flip_sequence(backward_branch->forward(ad::flip_sequence(x_hat), ctx));
    y = ad::add(y, ad::mul(back, gate));
  }
  auto out = ad::matmul(y, w_m);
  if (outer_gcn && placement == GcnPlacement::parallel) out = ad::add(out, outer_gcn->forward(x, ctx));
  return out;
}

void MambaMixer::collect(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".W_x", w_x);
  out.add(prefix + ".W_z", w_z);
  if (b_x.defined()) out.add(prefix + ".b_x", b_x);
  if (b_z.defined()) out.add(prefix + ".b_z", b_z);
  out.add(prefix + ".W_m", w_m);
  forward_branch.collect(prefix + ".fwd", out);
  if (backward_branch) backward_branch->collect(prefix + ".bwd", out);
  if (outer_gcn) outer_gcn->collect(prefix + ".gcn", out);
}

EncoderBlock::EncoderBlock(BlockKind kind, const BlockConfig& cfg, const SkeletonTopology* topo,
                           std::mt19937_64& rng)
    : norm1(cfg.dim),
      mixer(kind, cfg, topo, rng),
      norm2(cfg.dim),
      fc1(cfg.dim, cfg.dim * cfg.mlp_ratio, true, rng),
      fc2(cfg.dim * cfg.mlp_ratio, cfg.dim, true, rng) {}

ad::Tensor EncoderBlock::forward(const ad::Tensor& x, const RunContext& ctx) {
  require(x.rank() == 3 && x.dim(-1) == norm1.gamma.size(),
          "encoder block expects (B, l, " + std::to_string(norm1.gamma.size()) + "), got " +
              ad::shape_str(x.shape()));
  auto x1 = ad::add(x, maybe_dropout(mixer.mix(norm1.forward(x), ctx), ctx));
  auto hidden = maybe_dropout(ad::gelu(fc1.forward(norm2.forward(x1))), ctx);
  return ad::add(x1, fc2.forward(hidden));
}

void EncoderBlock::collect(const std::string& prefix, ParamSet& out) {
  norm1.collect(prefix + ".norm1", out);
  mixer.collect(prefix + ".mixer", out);
  norm2.collect(prefix + ".norm2", out);
  fc1.collect(prefix + ".mlp.fc1", out);
  fc2.collect(prefix + ".mlp.fc2", out);
}

}  // namespace poselift
