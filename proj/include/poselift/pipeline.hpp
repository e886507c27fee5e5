#pragma once

// Stage-2 lifter: bone-joint fusion embedding, alternating spatial GEM /
// temporal VIM refinement, and the 3-D regression head.

#include <vector>

#include "poselift/bone_aware.hpp"
#include "poselift/blocks.hpp"
#include "poselift/config.hpp"

namespace poselift {

// Network-unit bone features for a batch: r / coord_scale, theta, phi.
ad::Tensor pack_bones(const std::vector<const BoneSpherical*>& bones, double coord_scale);

class FusionEmbedding {
 public:
  FusionEmbedding(const ModelConfig& cfg, const SkeletonTopology& topo, std::mt19937_64& rng);

  // s2d (b, f, j, 2) and b3d (b, f, j, 3) in network units -> X0 (b, f, j, D).
  ad::Tensor forward(const ad::Tensor& s2d, const ad::Tensor& b3d, const RunContext& ctx);
  // Per-position fusion weights (b, j, f, 2) from the last forward call; kept
  // for inspection.
  const ad::Tensor& last_weights() const { return last_alpha_; }
  void collect(const std::string& prefix, ParamSet& out);

  Linear joint_embed;  // M_s
  Linear bone_embed;   // M_b
  ad::Tensor joint_pos;  // E_s (j, D)
  ad::Tensor frame_pos;  // E_t (f, D)
  EncoderBlock joint_spatial;   // GEM
  EncoderBlock joint_temporal;  // VIM
  EncoderBlock bone_spatial;    // VIM
  EncoderBlock bone_temporal;   // VIM
  Linear fusion;  // 2D -> 2

 private:
  std::size_t frames_;
  std::size_t joints_;
  ad::Tensor last_alpha_;
};

class Refinement {
 public:
  Refinement(const ModelConfig& cfg, const SkeletonTopology& topo, std::mt19937_64& rng);

  // X_{i+1} = trans(VIM(trans(GEM(X_i)))) for every layer; (b, f, j, D) in and out.
  ad::Tensor refine(const ad::Tensor& x, const RunContext& ctx);
  // Pointwise affine D -> 3, scaled to millimetres.
  ad::Tensor regress(const ad::Tensor& x) const;
  void collect(const std::string& prefix, ParamSet& out);

  struct Layer {
    EncoderBlock spatial;
    EncoderBlock temporal;
  };
  std::vector<Layer> layers;
  Linear head;

 private:
  double coord_scale_;
};

class PoseLifter {
 public:
  PoseLifter(const ModelConfig& cfg, const SkeletonTopology& topo);
  PoseLifter(const PoseLifter&) = delete;
  PoseLifter& operator=(const PoseLifter&) = delete;

  // Stage-2 network on precomputed bone features (network units).
  ad::Tensor forward(const ad::Tensor& s2d, const ad::Tensor& b3d, const RunContext& ctx);

  const ModelConfig& config() const { return cfg_; }
  const SkeletonTopology& topology() const { return topo_; }
  ParamSet params();
  FusionEmbedding& fusion() { return fusion_; }
  Refinement& refinement() { return refinement_; }

 private:
  ModelConfig cfg_;
  SkeletonTopology topo_;
  std::mt19937_64 rng_;
  FusionEmbedding fusion_;
  Refinement refinement_;
};

// Frozen stage-1 bone features for a sequence: arg-max categories of the
// bone-aware module assembled with the 2-D joints.
BoneSpherical infer_bones(BoneAwareModule& bone_aware, const PoseSeq2D& s2d);

// Full two-stage forward over a batch of equal-length sequences. No gradient
// reaches the bone-aware parameters.
ad::Tensor model_forward(const std::vector<const PoseSeq2D*>& s2d, BoneAwareModule& bone_aware,
                         PoseLifter& lifter, const RunContext& ctx);

}  // namespace poselift
