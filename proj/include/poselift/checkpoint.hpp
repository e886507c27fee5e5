#pragma once

// Stage checkpoints and prediction files on top of the array archive.

#include <filesystem>
#include <memory>
#include <string>

#include "poselift/archive.hpp"
#include "poselift/bone_aware.hpp"
#include "poselift/pipeline.hpp"

namespace poselift {

inline constexpr const char* kStage1Kind = "poselift.stage1/1";
inline constexpr const char* kStage2Kind = "poselift.stage2/1";
inline constexpr const char* kPredictionKind = "poselift.prediction/1";

void save_stage1(const std::filesystem::path& path, BoneAwareModule& model);
std::unique_ptr<BoneAwareModule> load_stage1(const std::filesystem::path& path);

// Records the SHA-256 of the stage-1 checkpoint file it was trained against.
void save_stage2(const std::filesystem::path& path, PoseLifter& lifter, const std::string& stage1_digest);
// When `stage1_path` is given its digest must match the recorded one.
std::unique_ptr<PoseLifter> load_stage2(const std::filesystem::path& path,
                                        const std::filesystem::path& stage1_path = {});
std::string stage2_parent_digest(const std::filesystem::path& path);

struct Prediction {
  std::string name;
  PoseSeq3D pose;
};
// (b, f, j, 3) when every sequence has the same length; otherwise one array
// per sequence.
void save_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds,
                      const ModelConfig& cfg, const SkeletonTopology& topo);
std::vector<Prediction> load_predictions(const std::filesystem::path& path, SkeletonTopology* topo = nullptr);

}  // namespace poselift
