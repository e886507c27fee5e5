#include "poselift/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "poselift/digest.hpp"
#include "poselift/kv.hpp"

namespace poselift {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

SkeletonTopology::SkeletonTopology(std::vector<int> parents, std::string name,
                                   std::vector<std::string> joint_names,
                                   std::vector<std::array<double, 3>> rest_offsets)
    : parents_(std::move(parents)),
      name_(std::move(name)),
      joint_names_(std::move(joint_names)),
      rest_offsets_(std::move(rest_offsets)) {
  const int j = static_cast<int>(parents_.size());
  require(j > 0, "topology needs at least one joint");
  for (int i = 0; i < j; ++i) {
    const int p = parents_[static_cast<std::size_t>(i)];
    require(p != i, "joint " + std::to_string(i) + " is its own parent");
    require(p >= -1 && p < j, "joint " + std::to_string(i) + " has out-of-range parent " +
                                  std::to_string(p));
    if (p == -1) {
      require(root_ == -1, "topology has more than one root");
      root_ = i;
    }
  }
  require(root_ != -1, "topology has no root");
  // Every joint must reach the root within j steps (acyclic and connected).
  for (int i = 0; i < j; ++i) {
    int cur = i;
    int steps = 0;
    while (cur != root_) {
      cur = parents_[static_cast<std::size_t>(cur)];
      require(++steps <= j, "parent map contains a cycle through joint " + std::to_string(i));
    }
  }
  require(joint_names_.empty() || joint_names_.size() == parents_.size(),
          "joint name count does not match joint count");
  require(rest_offsets_.empty() || rest_offsets_.size() == parents_.size(),
          "rest offset count does not match joint count");
}

std::vector<int> SkeletonTopology::topological_order() const {
  std::vector<int> order{root_};
  for (std::size_t head = 0; head < order.size(); ++head) {
    for (std::size_t i = 0; i < parents_.size(); ++i)
      if (parents_[i] == order[head]) order.push_back(static_cast<int>(i));
  }
  return order;
}

std::string SkeletonTopology::hash() const {
  std::ostringstream os;
  os << kTopologySchema << ";parents=";
  for (std::size_t i = 0; i < parents_.size(); ++i) os << (i ? "," : "") << parents_[i];
  return sha256_hex(os.str()).substr(0, 16);
}

SkeletonTopology SkeletonTopology::parse(const std::string& text, const std::string& source) {
  const auto doc = KeyValueDoc::parse(text, source);
  if (doc.get("schema") != kTopologySchema)
    throw ConfigError(source + ": unsupported topology schema '" + doc.get("schema") + "'");
  const auto count = doc.get_int("num_joints");
  std::vector<int> parents;
  for (auto p : doc.get_int_list("parents")) parents.push_back(static_cast<int>(p));
  if (static_cast<long long>(parents.size()) != count)
    throw ConfigError(source + ": parents lists " + std::to_string(parents.size()) +
                      " entries for num_joints = " + std::to_string(count));
  std::vector<std::string> names;
  if (doc.has("joint_names")) names = doc.get_word_list("joint_names");
  std::vector<std::array<double, 3>> offsets;
  if (doc.has("rest_offsets")) {
    auto flat = doc.get_double_list("rest_offsets");
    if (flat.size() != 3 * parents.size())
      throw ConfigError(source + ": rest_offsets needs 3 values per joint");
    for (std::size_t i = 0; i < parents.size(); ++i)
      offsets.push_back({flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]});
  }
  try {
    SkeletonTopology topo(std::move(parents), doc.get_string("name", "custom"), std::move(names),
                          std::move(offsets));
    if (topo.root_index() != doc.get_int("root_index"))
      throw ConfigError(source + ": root_index does not match the parent map");
    return topo;
  } catch (const ContractViolation& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

SkeletonTopology SkeletonTopology::load(const std::filesystem::path& path) {
  return parse(KeyValueDoc::load(path).serialize(), path.string());
}

std::string SkeletonTopology::serialize() const {
  KeyValueDoc doc;
  doc.set("schema", kTopologySchema);
  doc.set("name", name_);
  doc.set_value("num_joints", num_joints());
  doc.set_value("root_index", root_);
  std::string parents;
  for (std::size_t i = 0; i < parents_.size(); ++i)
    parents += (i ? " " : "") + std::to_string(parents_[i]);
  doc.set("parents", parents);
  if (!joint_names_.empty()) {
    std::string names;
    for (std::size_t i = 0; i < joint_names_.size(); ++i) names += (i ? " " : "") + joint_names_[i];
    doc.set("joint_names", names);
  }
  if (!rest_offsets_.empty()) {
    std::string flat;
    for (std::size_t i = 0; i < rest_offsets_.size(); ++i)
      for (int c = 0; c < 3; ++c)
        flat += (flat.empty() ? "" : " ") + KeyValueDoc::format_value(rest_offsets_[i][c]);
    doc.set("rest_offsets", flat);
  }
  return doc.serialize();
}

SkeletonTopology SkeletonTopology::human36m() {
  // y up, the subject faces -z (towards the camera). Knees and elbows are
  // slightly bent so limbs leave the image plane at rest.
  std::vector<std::array<double, 3>> offsets = {
      {0, 0, 0},       {-130, 0, 0},    {0, -420, -130}, {0, -420, 110},  {130, 0, 0},
      {0, -420, -130}, {0, -420, 110},  {0, 225, -45},   {0, 245, -35},   {0, 100, -60},
      {0, 110, 25},    {150, -15, 10},  {55, -265, -70}, {0, -90, -230},  {-150, -15, 10},
      {-55, -265, -70}, {0, -90, -230}};
  return SkeletonTopology({-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15}, "human36m-17",
                          {"pelvis", "r_hip", "r_knee", "r_foot", "l_hip", "l_knee", "l_foot",
                           "spine", "thorax", "nose", "head", "l_shoulder", "l_elbow", "l_wrist",
                           "r_shoulder", "r_elbow", "r_wrist"},
                          std::move(offsets));
}

Spherical cart_to_spherical(const Cartesian& v) {
  const double planar = std::hypot(v.x, v.y);
  const double r = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  if (r == 0.0) return {0.0, kDegenerateTheta, kDegeneratePhi};
  const double theta = std::atan2(planar, v.z);  // in [0, pi] since planar >= 0
  double phi = kDegeneratePhi;
  if (v.x != 0.0 || v.y != 0.0) {
    phi = std::atan2(v.y, v.x);
    if (phi < 0.0) phi += kTwoPi;
    if (phi >= kTwoPi) phi -= kTwoPi;
  }
  return {r, theta, phi};
}

Cartesian spherical_to_cart(const Spherical& s) {
  const double st = std::sin(s.theta);
  return {s.r * st * std::cos(s.phi), s.r * st * std::sin(s.phi), s.r * std::cos(s.theta)};
}

BoneSpherical cart_to_spherical(const BoneCartesian& bones) {
  BoneSpherical out(bones.frames(), bones.joints());
  for (std::size_t f = 0; f < bones.frames(); ++f)
    for (std::size_t j = 0; j < bones.joints(); ++j) {
      const auto s = cart_to_spherical(Cartesian{bones(f, j, 0), bones(f, j, 1), bones(f, j, 2)});
      out(f, j, 0) = s.r;
      out(f, j, 1) = s.theta;
      out(f, j, 2) = s.phi;
    }
  return out;
}

BoneCartesian spherical_to_cart(const BoneSpherical& bones) {
  BoneCartesian out(bones.frames(), bones.joints());
  for (std::size_t f = 0; f < bones.frames(); ++f)
    for (std::size_t j = 0; j < bones.joints(); ++j) {
      const auto c = spherical_to_cart(Spherical{bones(f, j, 0), bones(f, j, 1), bones(f, j, 2)});
      out(f, j, 0) = c.x;
      out(f, j, 1) = c.y;
      out(f, j, 2) = c.z;
    }
  return out;
}

BoneCartesian compute_bone_vectors(const PoseSeq3D& pose, const SkeletonTopology& topo) {
  require(pose.joints() == topo.num_joints(),
          "pose has " + std::to_string(pose.joints()) + " joints, topology has " +
              std::to_string(topo.num_joints()));
  BoneCartesian out(pose.frames(), pose.joints());
  for (std::size_t f = 0; f < pose.frames(); ++f)
    for (std::size_t j = 0; j < pose.joints(); ++j) {
      const int p = topo.parent(j);
      if (p < 0) continue;
      for (std::size_t c = 0; c < 3; ++c)
        out(f, j, c) = pose(f, j, c) - pose(f, static_cast<std::size_t>(p), c);
    }
  return out;
}

int quantize_polar(double theta, int n) {
  require(n >= 2, "category count must be at least 2, got " + std::to_string(n));
  require(theta >= 0.0 && theta <= kPi, "polar angle outside [0, pi]: " + std::to_string(theta));
  // Edges k pi / n are compared as theta * n >= k * pi in extended precision,
  // where both products are exact, so edge points land in the upper bin.
  const long double t = static_cast<long double>(theta) * n;
  const long double p = kPi;
  int k = std::clamp(static_cast<int>(std::floor(t / p)), 0, n - 1);
  while (k + 1 < n && t >= (k + 1) * p) ++k;
  while (k > 0 && t < k * p) --k;
  return k;
}

double dequantize_polar(int category, int n) {
  require(n >= 2, "category count must be at least 2, got " + std::to_string(n));
  require(category >= 0 && category < n,
          "category " + std::to_string(category) + " outside [0, " + std::to_string(n) + ")");
  return static_cast<double>(2 * category + 1) * kPi / static_cast<double>(2 * n);
}

double recover_depth(double x, double y, double theta) {
  require(theta > 0.0 && theta < kPi,
          "recover_depth needs theta strictly inside (0, pi), got " + std::to_string(theta));
  const double offset = kPi / 2.0 - theta;
  if (std::abs(offset) < 1e-12) return 0.0;
  // sqrt(x^2+y^2) / tan(theta) == sqrt(x^2+y^2) * tan(pi/2 - theta)
  return std::hypot(x, y) * std::tan(offset);
}

NormalizedAdjacency build_adjacency(const SkeletonTopology& topo, AdjacencyDirection direction) {
  const std::size_t j = topo.num_joints();
  std::vector<double> a(j * j, 0.0);
  for (std::size_t i = 0; i < j; ++i) {
    a[i * j + i] = 1.0;
    const int p = topo.parent(i);
    if (p >= 0) {
      a[i * j + static_cast<std::size_t>(p)] = 1.0;
      a[static_cast<std::size_t>(p) * j + i] = 1.0;
    }
  }
  if (direction == AdjacencyDirection::backward) {
    std::vector<double> reversed(j * j);
    for (std::size_t i = 0; i < j; ++i)
      for (std::size_t k = 0; k < j; ++k) reversed[i * j + k] = a[(j - 1 - i) * j + (j - 1 - k)];
    a = std::move(reversed);
  }
  std::vector<double> inv_sqrt_deg(j);
  for (std::size_t i = 0; i < j; ++i) {
    double d = 0.0;
    for (std::size_t k = 0; k < j; ++k) d += a[i * j + k];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  NormalizedAdjacency out{j, direction, std::vector<double>(j * j)};
  for (std::size_t i = 0; i < j; ++i)
    for (std::size_t k = 0; k < j; ++k)
      out.matrix[i * j + k] = inv_sqrt_deg[i] * a[i * j + k] * inv_sqrt_deg[k];
  return out;
}

BoneSpherical assemble_bone_spherical(const PoseSeq2D& s2d, const PolarCategories& cats,
                                      const SkeletonTopology& topo) {
  require(s2d.joints() == topo.num_joints(), "2-D pose joint count does not match topology");
  require(cats.frames == s2d.frames() && cats.joints == s2d.joints(),
          "category array shape does not match the 2-D pose");
  const int n = cats.num_categories;
  BoneSpherical out(s2d.frames(), s2d.joints());
  for (std::size_t f = 0; f < s2d.frames(); ++f)
    for (std::size_t j = 0; j < s2d.joints(); ++j) {
      const int p = topo.parent(j);
      if (p < 0) {
        out(f, j, 0) = 0.0;
        out(f, j, 1) = kDegenerateTheta;
        out(f, j, 2) = kDegeneratePhi;
        continue;
      }
      const auto parent = static_cast<std::size_t>(p);
      const double x = s2d(f, j, 0) - s2d(f, parent, 0);
      const double y = s2d(f, j, 1) - s2d(f, parent, 1);
      const double theta = dequantize_polar(cats(f, j), n);
      if (x == 0.0 && y == 0.0) {
        out(f, j, 0) = 0.0;
        out(f, j, 1) = kDegenerateTheta;
        out(f, j, 2) = kDegeneratePhi;
        continue;
      }
      const double z = recover_depth(x, y, theta);
      const auto s = cart_to_spherical(Cartesian{x, y, z});
      out(f, j, 0) = s.r;
      // The bin midpoint passes through unchanged; recomputing it from
      // (x, y, z) would only add rounding.
      out(f, j, 1) = theta;
      out(f, j, 2) = s.phi;
    }
  return out;
}

}  // namespace poselift
