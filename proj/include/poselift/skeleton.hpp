#pragma once

// Non-learned skeletal math: bone vectors, spherical coordinates, polar-angle
// bins, depth recovery and normalized joint adjacency.

#include <array>
#include <cstddef>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "poselift/error.hpp"

namespace poselift {

inline constexpr const char* kTopologySchema = "poselift.topology/1";

// Parent-map skeleton tree. Construction validates the tree invariants.
class SkeletonTopology {
 public:
  SkeletonTopology() = default;
  SkeletonTopology(std::vector<int> parents, std::string name = "custom",
                   std::vector<std::string> joint_names = {},
                   std::vector<std::array<double, 3>> rest_offsets = {});

  std::size_t num_joints() const { return parents_.size(); }
  int root_index() const { return root_; }
  int parent(std::size_t joint) const { return parents_[joint]; }
  const std::vector<int>& parents() const { return parents_; }
  const std::string& name() const { return name_; }
  const std::vector<std::string>& joint_names() const { return joint_names_; }
  // Bone offsets (mm) of each joint from its parent in the rest pose; empty
  // when the topology file lists none. The root row is zero.
  const std::vector<std::array<double, 3>>& rest_offsets() const { return rest_offsets_; }
  // Joints ordered so every parent precedes its children.
  std::vector<int> topological_order() const;

  // Digest over the schema tag and the parent map only.
  std::string hash() const;

  static SkeletonTopology parse(const std::string& text, const std::string& source = "<string>");
  static SkeletonTopology load(const std::filesystem::path& path);
  std::string serialize() const;

  // 17-joint Human3.6M skeleton rooted at the pelvis.
  static SkeletonTopology human36m();

 private:
  std::vector<int> parents_;
  int root_ = -1;
  std::string name_;
  std::vector<std::string> joint_names_;
  std::vector<std::array<double, 3>> rest_offsets_;
};

// (frames x joints x C) row-major array. The tag keeps semantically distinct
// arrays from mixing through the type system.
template <std::size_t C, class Tag>
class JointSeries {
 public:
  static constexpr std::size_t channels = C;

  JointSeries() = default;
  JointSeries(std::size_t frames, std::size_t joints)
      : frames_(frames), joints_(joints), data_(frames * joints * C, 0.0) {}
  JointSeries(std::size_t frames, std::size_t joints, std::vector<double> data)
      : frames_(frames), joints_(joints), data_(std::move(data)) {
    require(data_.size() == frames_ * joints_ * C, "joint series payload does not match its shape");
  }

  std::size_t frames() const { return frames_; }
  std::size_t joints() const { return joints_; }
  double& operator()(std::size_t f, std::size_t j, std::size_t c) {
    return data_[(f * joints_ + j) * C + c];
  }
  double operator()(std::size_t f, std::size_t j, std::size_t c) const {
    return data_[(f * joints_ + j) * C + c];
  }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& storage() const { return data_; }

  friend bool operator==(const JointSeries&, const JointSeries&) = default;

 private:
  std::size_t frames_ = 0;
  std::size_t joints_ = 0;
  std::vector<double> data_;
};

using PoseSeq2D = JointSeries<2, struct Pose2DTag>;
using PoseSeq3D = JointSeries<3, struct Pose3DTag>;
using BoneCartesian = JointSeries<3, struct BoneCartesianTag>;
// Channels ordered (r, theta, phi).
using BoneSpherical = JointSeries<3, struct BoneSphericalTag>;

struct PolarCategories {
  std::size_t frames = 0;
  std::size_t joints = 0;
  int num_categories = 0;
  std::vector<int> data;

  PolarCategories() = default;
  PolarCategories(std::size_t f, std::size_t j, int n) : frames(f), joints(j), num_categories(n), data(f * j, 0) {}
  int& operator()(std::size_t f, std::size_t j) { return data[f * joints + j]; }
  int operator()(std::size_t f, std::size_t j) const { return data[f * joints + j]; }
};

enum class AdjacencyDirection { forward, backward };

struct NormalizedAdjacency {
  std::size_t joints = 0;
  AdjacencyDirection direction = AdjacencyDirection::forward;
  std::vector<double> matrix;  // row-major joints x joints

  double operator()(std::size_t i, std::size_t k) const { return matrix[i * joints + k]; }
};

struct Spherical {
  double r;
  double theta;
  double phi;
};

struct Cartesian {
  double x;
  double y;
  double z;
};

// Degenerate-bone defaults: zero length or no in-plane component.
inline constexpr double kDegenerateTheta = std::numbers::pi / 2.0;
inline constexpr double kDegeneratePhi = 0.0;

Spherical cart_to_spherical(const Cartesian& v);
Cartesian spherical_to_cart(const Spherical& s);
BoneSpherical cart_to_spherical(const BoneCartesian& bones);
BoneCartesian spherical_to_cart(const BoneSpherical& bones);

BoneCartesian compute_bone_vectors(const PoseSeq3D& pose, const SkeletonTopology& topo);

int quantize_polar(double theta, int n);
double dequantize_polar(int category, int n);
double recover_depth(double x, double y, double theta);

NormalizedAdjacency build_adjacency(const SkeletonTopology& topo, AdjacencyDirection direction);

// B_3D from 2-D joints and predicted polar bins. The category count is taken
// from `cats`.
BoneSpherical assemble_bone_spherical(const PoseSeq2D& s2d, const PolarCategories& cats,
                                      const SkeletonTopology& topo);

}  // namespace poselift
