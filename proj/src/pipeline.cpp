#include "poselift/pipeline.hpp"

#include <cmath>

namespace poselift {

namespace {

// (b, f, j, D) <-> (b*f, j, D) / (b*j, f, D) helpers.
ad::Tensor over_joints(EncoderBlock& block, const ad::Tensor& x, const RunContext& ctx) {
  const std::size_t b = x.dim(0), f = x.dim(1), j = x.dim(2), d = x.dim(3);
  return ad::reshape(block.forward(ad::reshape(x, {b * f, j, d}), ctx), {b, f, j, d});
}

// x is (b, j, f, D); the block runs along frames.
ad::Tensor over_frames(EncoderBlock& block, const ad::Tensor& x, const RunContext& ctx) {
  const std::size_t b = x.dim(0), j = x.dim(1), f = x.dim(2), d = x.dim(3);
  return ad::reshape(block.forward(ad::reshape(x, {b * j, f, d}), ctx), {b, j, f, d});
}

}  // namespace

ad::Tensor pack_bones(const std::vector<const BoneSpherical*>& bones, double coord_scale) {
  require(!bones.empty(), "cannot pack an empty batch");
  const std::size_t f = bones.front()->frames(), j = bones.front()->joints();
  std::vector<double> data;
  data.reserve(bones.size() * f * j * 3);
  for (const auto* b : bones) {
    require(b->frames() == f && b->joints() == j, "batched bone arrays must share (frames, joints)");
    for (std::size_t i = 0; i < f * j; ++i) {
      data.push_back(b->data()[3 * i] / coord_scale);
      data.push_back(b->data()[3 * i + 1]);
      data.push_back(b->data()[3 * i + 2]);
    }
  }
  return ad::Tensor({bones.size(), f, j, 3}, std::move(data));
}

FusionEmbedding::FusionEmbedding(const ModelConfig& cfg, const SkeletonTopology& topo,
                                 std::mt19937_64& rng)
    : joint_embed(2, cfg.dim, true, rng),
      bone_embed(3, cfg.dim, true, rng),
      joint_pos(ad::Tensor::zeros({cfg.joints, cfg.dim}, true)),
      frame_pos(ad::Tensor::zeros({cfg.frames, cfg.dim}, true)),
      joint_spatial(BlockKind::gem, cfg.block(cfg.dim), &topo, rng),
      joint_temporal(BlockKind::vim, cfg.block(cfg.dim), nullptr, rng),
      bone_spatial(BlockKind::vim, cfg.block(cfg.dim), nullptr, rng),
      bone_temporal(BlockKind::vim, cfg.block(cfg.dim), nullptr, rng),
      fusion(2 * cfg.dim, 2, true, rng),
      frames_(cfg.frames),
      joints_(cfg.joints) {}

ad::Tensor FusionEmbedding::forward(const ad::Tensor& s2d, const ad::Tensor& b3d,
                                    const RunContext& ctx) {
  require(s2d.rank() == 4 && s2d.dim(3) == 2 && b3d.rank() == 4 && b3d.dim(3) == 3,
          "fusion embedding expects (b, f, j, 2) joints and (b, f, j, 3) bones");
  if (s2d.dim(1) != frames_ || s2d.dim(2) != joints_)
    throw ConfigError("fusion embedding is bound to (f, j) = (" + std::to_string(frames_) + ", " +
                      std::to_string(joints_) + "), input has (" + std::to_string(s2d.dim(1)) +
                      ", " + std::to_string(s2d.dim(2)) + ")");
  require(b3d.dim(0) == s2d.dim(0) && b3d.dim(1) == s2d.dim(1) && b3d.dim(2) == s2d.dim(2),
          "bone features do not match the 2-D batch");

  auto s_s = over_joints(joint_spatial, ad::add(joint_embed.forward(s2d), joint_pos), ctx);
  auto s_t = over_frames(joint_temporal, ad::add(ad::transpose12(s_s), frame_pos), ctx);

  auto b_s = over_joints(bone_spatial, bone_embed.forward(b3d), ctx);
  auto b_t = over_frames(bone_temporal, ad::transpose12(b_s), ctx);

  last_alpha_ = ad::softmax(fusion.forward(ad::concat_last(s_t, b_t)));
  return ad::transpose12(ad::mix2(last_alpha_, s_t, b_t));
}

void FusionEmbedding::collect(const std::string& prefix, ParamSet& out) {
  joint_embed.collect(prefix + ".M_s", out);
  bone_embed.collect(prefix + ".M_b", out);
  out.add(prefix + ".E_s", joint_pos);
  out.add(prefix + ".E_t", frame_pos);
  joint_spatial.collect(prefix + ".joint_spatial", out);
  joint_temporal.collect(prefix + ".joint_temporal", out);
  bone_spatial.collect(prefix + ".bone_spatial", out);
  bone_temporal.collect(prefix + ".bone_temporal", out);
  fusion.collect(prefix + ".W", out);
}

Refinement::Refinement(const ModelConfig& cfg, const SkeletonTopology& topo, std::mt19937_64& rng)
    : coord_scale_(cfg.coord_scale) {
  for (std::size_t i = 0; i < cfg.depth; ++i)
    layers.push_back({EncoderBlock(BlockKind::gem, cfg.block(cfg.dim), &topo, rng),
                      EncoderBlock(BlockKind::vim, cfg.block(cfg.dim), nullptr, rng)});
  head = Linear(cfg.dim, 3, true, rng);
}

ad::Tensor Refinement::refine(const ad::Tensor& x, const RunContext& ctx) {
  require(x.rank() == 4, "refinement expects (b, f, j, D), got " + ad::shape_str(x.shape()));
  ad::Tensor cur = x;
  for (auto& layer : layers) {
    auto spatial = over_joints(layer.spatial, cur, ctx);
    cur = ad::transpose12(over_frames(layer.temporal, ad::transpose12(spatial), ctx));
  }
  return cur;
}

ad::Tensor Refinement::regress(const ad::Tensor& x) const {
  return ad::scale(head.forward(x), coord_scale_);
}

void Refinement::collect(const std::string& prefix, ParamSet& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = prefix + ".layer" + std::to_string(i);
    layers[i].spatial.collect(p + ".gem", out);
    layers[i].temporal.collect(p + ".vim", out);
  }
  head.collect(prefix + ".head", out);
}

PoseLifter::PoseLifter(const ModelConfig& cfg, const SkeletonTopology& topo)
    : cfg_((cfg.validate(), cfg)),
      topo_(topo),
      rng_(cfg.seed * 2 + 2),
      fusion_(cfg_, topo_, rng_),
      refinement_(cfg_, topo_, rng_) {
  require(topo.num_joints() == cfg.joints, "pose lifter: topology has " +
                                               std::to_string(topo.num_joints()) +
                                               " joints, config expects " + std::to_string(cfg.joints));
}

ad::Tensor PoseLifter::forward(const ad::Tensor& s2d, const ad::Tensor& b3d, const RunContext& ctx) {
  auto x0 = fusion_.forward(ad::scale(s2d, 1.0 / cfg_.coord_scale), b3d, ctx);
  return refinement_.regress(refinement_.refine(x0, ctx));
}

ParamSet PoseLifter::params() {
  ParamSet out;
  fusion_.collect("fusion", out);
  refinement_.collect("refine", out);
  return out;
}

BoneSpherical infer_bones(BoneAwareModule& bone_aware, const PoseSeq2D& s2d) {
  return assemble_bone_spherical(s2d, classify(bone_aware.forward(s2d)), bone_aware.topology());
}

ad::Tensor model_forward(const std::vector<const PoseSeq2D*>& s2d, BoneAwareModule& bone_aware,
                         PoseLifter& lifter, const RunContext& ctx) {
  if (bone_aware.topology().hash() != lifter.topology().hash())
    throw ConfigError("stage-1 topology " + bone_aware.topology().hash() +
                      " does not match stage-2 topology " + lifter.topology().hash());
  std::vector<BoneSpherical> bones;
  bones.reserve(s2d.size());
  for (const auto* s : s2d) bones.push_back(infer_bones(bone_aware, *s));
  std::vector<const BoneSpherical*> bone_ptrs;
  for (const auto& b : bones) bone_ptrs.push_back(&b);
  return lifter.forward(pack_poses(s2d), pack_bones(bone_ptrs, lifter.config().coord_scale), ctx);
}

}  // namespace poselift
