#include "poselift/bone_aware.hpp"

#include <cmath>

namespace poselift {

namespace {

template <class Series>
ad::Tensor pack(const std::vector<const Series*>& poses) {
  require(!poses.empty(), "cannot pack an empty batch");
  const std::size_t f = poses.front()->frames(), j = poses.front()->joints();
  std::vector<double> data;
  data.reserve(poses.size() * f * j * Series::channels);
  for (const auto* p : poses) {
    require(p->frames() == f && p->joints() == j, "batched sequences must share (frames, joints)");
    data.insert(data.end(), p->data().begin(), p->data().end());
  }
  return ad::Tensor({poses.size(), f, j, Series::channels}, std::move(data));
}

}  // namespace

ad::Tensor pack_poses(const std::vector<const PoseSeq2D*>& poses) { return pack(poses); }
ad::Tensor pack_poses(const std::vector<const PoseSeq3D*>& poses) { return pack(poses); }

BoneAwareModule::BoneAwareModule(const ModelConfig& cfg, const SkeletonTopology& topo)
    : cfg_(cfg), topo_(topo) {
  cfg_.validate();
  require(topo.num_joints() == cfg.joints, "bone-aware module: topology has " +
                                               std::to_string(topo.num_joints()) +
                                               " joints, config expects " + std::to_string(cfg.joints));
  std::mt19937_64 rng(cfg.seed * 2 + 1);
  const auto dims = layer_dims();
  embed_ = Linear(2, dims.front(), true, rng);
  for (std::size_t i = 0; i < dims.size(); ++i) {
    Layer layer{EncoderBlock(BlockKind::vim, cfg_.block(dims[i]), nullptr, rng),
                EncoderBlock(BlockKind::vim, cfg_.block(dims[i]), nullptr, rng),
                {}};
    if (i + 1 < dims.size())
      layer.attenuation =
          uniform_param({dims[i], dims[i] / 2}, 1.0 / std::sqrt(static_cast<double>(dims[i])), rng);
    layers_.push_back(std::move(layer));
  }
  head_ = Linear(dims.back(), static_cast<std::size_t>(cfg_.categories), true, rng);
}

std::vector<std::size_t> BoneAwareModule::layer_dims() const {
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < cfg_.bone_depth; ++i) dims.push_back(cfg_.bone_dim >> i);
  return dims;
}

ad::Tensor BoneAwareModule::logits(const ad::Tensor& s2d, const RunContext& ctx) {
  require(s2d.rank() == 4 && s2d.dim(2) == cfg_.joints && s2d.dim(3) == 2,
          "bone-aware input must be (b, f, " + std::to_string(cfg_.joints) + ", 2), got " +
              ad::shape_str(s2d.shape()));
  const std::size_t b = s2d.dim(0), f = s2d.dim(1), j = s2d.dim(2);
  auto x = embed_.forward(ad::scale(s2d, 1.0 / cfg_.coord_scale));
  for (auto& layer : layers_) {
    const std::size_t d = x.dim(-1);
    auto spatial = layer.spatial.forward(ad::reshape(x, {b * f, j, d}), ctx);
    auto by_joint = ad::transpose12(ad::reshape(spatial, {b, f, j, d}));
    auto temporal = layer.temporal.forward(ad::reshape(by_joint, {b * j, f, d}), ctx);
    x = ad::transpose12(ad::reshape(temporal, {b, j, f, d}));
    if (layer.attenuation.defined()) x = ad::matmul(x, layer.attenuation);
  }
  return head_.forward(x);
}

ad::Tensor BoneAwareModule::probabilities(const ad::Tensor& s2d, const RunContext& ctx) {
  return ad::softmax(logits(s2d, ctx));
}

CategoryProbabilities BoneAwareModule::forward(const PoseSeq2D& s2d) {
  ad::NoGradGuard guard;
  const auto probs = probabilities(pack_poses(std::vector<const PoseSeq2D*>{&s2d}), RunContext{});
  return {s2d.frames(), s2d.joints(), cfg_.categories, probs.values()};
}

ParamSet BoneAwareModule::params() {
  ParamSet out;
  embed_.collect("bone_aware.embed", out);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "bone_aware.layer" + std::to_string(i);
    layers_[i].spatial.collect(p + ".spatial", out);
    layers_[i].temporal.collect(p + ".temporal", out);
    if (layers_[i].attenuation.defined()) out.add(p + ".W_R", layers_[i].attenuation);
  }
  head_.collect("bone_aware.head", out);
  return out;
}

PolarCategories classify(const CategoryProbabilities& probs) {
  PolarCategories out(probs.frames, probs.joints, probs.num_categories);
  for (std::size_t f = 0; f < probs.frames; ++f)
    for (std::size_t j = 0; j < probs.joints; ++j) {
      int best = 0;
      for (int c = 1; c < probs.num_categories; ++c)
        if (probs(f, j, c) > probs(f, j, best)) best = c;
      out(f, j) = best;
    }
  return out;
}

PolarCategories classify_logits(const ad::Tensor& logits, std::size_t batch_index) {
  require(logits.rank() == 4 && batch_index < logits.dim(0), "classify_logits: bad batch index");
  const std::size_t f = logits.dim(1), j = logits.dim(2), n = logits.dim(3);
  const auto offset = batch_index * f * j * n;
  CategoryProbabilities view{f, j, static_cast<int>(n),
                             std::vector<double>(logits.data().begin() + static_cast<std::ptrdiff_t>(offset),
                                                 logits.data().begin() + static_cast<std::ptrdiff_t>(offset + f * j * n))};
  // softmax is monotone, so the arg-max of the logits is the arg-max of the
  // probabilities.
  return classify(view);
}

PolarCategories ground_truth_categories(const PoseSeq3D& pose, const SkeletonTopology& topo, int n) {
  const auto spherical = cart_to_spherical(compute_bone_vectors(pose, topo));
  PolarCategories out(pose.frames(), pose.joints(), n);
  const int root_bin = quantize_polar(kDegenerateTheta, n);
  for (std::size_t f = 0; f < pose.frames(); ++f)
    for (std::size_t j = 0; j < pose.joints(); ++j)
      out(f, j) = topo.parent(j) < 0 ? root_bin : quantize_polar(spherical(f, j, 1), n);
  return out;
}

}  // namespace poselift
