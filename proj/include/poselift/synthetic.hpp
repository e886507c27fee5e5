#pragma once

// Procedural articulated motion: smooth joint rotations composed through
// forward kinematics, projected by a pinhole camera.

#include <cstdint>
#include <vector>

#include "poselift/dataset.hpp"
#include "poselift/skeleton.hpp"

namespace poselift {

struct SyntheticSpec {
  std::size_t num_sequences = 200;
  std::size_t frames = 243;
  SkeletonTopology topology = SkeletonTopology::human36m();
  // Per-joint bone length (mm), root entry ignored. Empty: lengths of the
  // topology's rest offsets.
  std::vector<double> bone_lengths;
  double cutoff = 0.05;      // highest motion frequency, cycles per frame
  double amplitude = 0.35;   // joint-angle scale (rad)
  double noise_sigma = 0.0;  // 2-D observation noise (mm)
  double camera_depth = 4000.0;  // subject distance and focal length (mm)
  double view_yaw = 0.6;         // mean subject yaw towards the camera (rad)
  double yaw_jitter = 0.35;      // per-sequence uniform yaw spread (rad)
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<double> resolved_lengths() const;
};

// Pinhole projection onto the subject plane: (X, Y) * d / (Z + d).
PoseSeq2D project(const PoseSeq3D& pose, double camera_depth);

// Deterministic in (spec, seed); sequence i depends only on (seed, i).
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace poselift
