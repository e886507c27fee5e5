#pragma once

// Stage-1 pyramid classifier: predicts a polar-angle bin for every bone at
// every frame from the 2-D pose sequence.

#include <cstdint>
#include <vector>

#include "poselift/blocks.hpp"
#include "poselift/config.hpp"
#include "poselift/skeleton.hpp"

namespace poselift {

struct CategoryProbabilities {
  std::size_t frames = 0;
  std::size_t joints = 0;
  int num_categories = 0;
  std::vector<double> data;  // (frames x joints x n)

  double operator()(std::size_t f, std::size_t j, int c) const {
    return data[(f * joints + j) * static_cast<std::size_t>(num_categories) + static_cast<std::size_t>(c)];
  }
};

// Packs sequences of equal length into a (b, f, j, C) tensor.
ad::Tensor pack_poses(const std::vector<const PoseSeq2D*>& poses);
ad::Tensor pack_poses(const std::vector<const PoseSeq3D*>& poses);

class BoneAwareModule {
 public:
  BoneAwareModule(const ModelConfig& cfg, const SkeletonTopology& topo);
  BoneAwareModule(const BoneAwareModule&) = delete;
  BoneAwareModule& operator=(const BoneAwareModule&) = delete;

  // s2d: (b, f, j, 2) in the dataset's 2-D units. Returns (b, f, j, n) logits.
  ad::Tensor logits(const ad::Tensor& s2d, const RunContext& ctx);
  ad::Tensor probabilities(const ad::Tensor& s2d, const RunContext& ctx);
  // Evaluation-mode forward over one sequence.
  CategoryProbabilities forward(const PoseSeq2D& s2d);

  // Stream width at each pyramid layer, d0 / 2^i.
  std::vector<std::size_t> layer_dims() const;
  int categories() const { return cfg_.categories; }
  const ModelConfig& config() const { return cfg_; }
  const SkeletonTopology& topology() const { return topo_; }
  ParamSet params();

 private:
  struct Layer {
    EncoderBlock spatial;
    EncoderBlock temporal;
    ad::Tensor attenuation;  // (d_i, d_i / 2); undefined on the last layer
  };

  ModelConfig cfg_;
  SkeletonTopology topo_;
  Linear embed_;
  std::vector<Layer> layers_;
  Linear head_;
};

// Arg-max per (frame, joint); ties go to the lowest index.
PolarCategories classify(const CategoryProbabilities& probs);
PolarCategories classify_logits(const ad::Tensor& logits, std::size_t batch_index);

// Training labels: quantized polar angle of each ground-truth bone; the root
// gets the bin holding pi/2.
PolarCategories ground_truth_categories(const PoseSeq3D& pose, const SkeletonTopology& topo, int n);

}  // namespace poselift
