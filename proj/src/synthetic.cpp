#include "poselift/synthetic.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <random>

#include "poselift/error.hpp"

namespace poselift {

namespace {

constexpr int kHarmonics = 3;
constexpr double kActionScale[] = {0.6, 0.8, 1.0, 1.2};

// Band-limited random signal: a few sinusoids at frequencies up to `cutoff`.
struct SmoothSignal {
  double amp[kHarmonics];
  double freq[kHarmonics];
  double phase[kHarmonics];

  SmoothSignal(std::mt19937_64& rng, double cutoff) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int k = 0; k < kHarmonics; ++k) {
      amp[k] = gauss(rng) / std::sqrt(static_cast<double>(kHarmonics));
      freq[k] = cutoff * (0.05 + 0.95 * unit(rng));
      phase[k] = 2.0 * std::numbers::pi * unit(rng);
    }
  }
  double operator()(double t) const {
    double v = 0.0;
    for (int k = 0; k < kHarmonics; ++k) v += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * t + phase[k]);
    return v;
  }
};

}  // namespace

void SyntheticSpec::validate() const {
  if (num_sequences == 0) throw ConfigError("synthetic spec: num_sequences must be positive");
  if (frames == 0) throw ConfigError("synthetic spec: frames must be positive");
  if (!(cutoff > 0.0 && cutoff <= 0.5)) throw ConfigError("synthetic spec: cutoff must lie in (0, 0.5]");
  if (!(noise_sigma >= 0.0)) throw ConfigError("synthetic spec: noise sigma must be non-negative");
  if (!(amplitude >= 0.0)) throw ConfigError("synthetic spec: amplitude must be non-negative");
  if (!(camera_depth > 0.0)) throw ConfigError("synthetic spec: camera depth must be positive");
  if (topology.rest_offsets().size() != topology.num_joints())
    throw ConfigError("synthetic spec: topology '" + topology.name() + "' carries no rest offsets");
  const auto lengths = resolved_lengths();
  for (std::size_t j = 0; j < lengths.size(); ++j) {
    if (topology.parent(j) < 0) continue;
    if (!(lengths[j] > 0.0))
      throw ConfigError("synthetic spec: bone length of joint " + std::to_string(j) + " must be positive");
    const auto& o = topology.rest_offsets()[j];
    if (o[0] == 0.0 && o[1] == 0.0 && o[2] == 0.0)
      throw ConfigError("synthetic spec: rest offset of joint " + std::to_string(j) + " is zero");
  }
}

std::vector<double> SyntheticSpec::resolved_lengths() const {
  if (!bone_lengths.empty()) {
    if (bone_lengths.size() != topology.num_joints())
      throw ConfigError("synthetic spec: " + std::to_string(bone_lengths.size()) + " bone lengths for " +
                        std::to_string(topology.num_joints()) + " joints");
    return bone_lengths;
  }
  std::vector<double> out;
  for (const auto& o : topology.rest_offsets()) out.push_back(std::sqrt(o[0] * o[0] + o[1] * o[1] + o[2] * o[2]));
  return out;
}

PoseSeq2D project(const PoseSeq3D& pose, double camera_depth) {
  PoseSeq2D out(pose.frames(), pose.joints());
  for (std::size_t f = 0; f < pose.frames(); ++f)
    for (std::size_t j = 0; j < pose.joints(); ++j) {
      const double depth = pose(f, j, 2) + camera_depth;
      require(depth > 0.0, "projection: joint behind the camera");
      out(f, j, 0) = pose(f, j, 0) * camera_depth / depth;
      out(f, j, 1) = pose(f, j, 1) * camera_depth / depth;
    }
  return out;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto& topo = spec.topology;
  const std::size_t j = topo.num_joints();
  const auto lengths = spec.resolved_lengths();
  const auto order = topo.topological_order();

  std::vector<Eigen::Vector3d> rest(j, Eigen::Vector3d::Zero());
  for (std::size_t k = 0; k < j; ++k) {
    if (topo.parent(k) < 0) continue;
    const auto& o = topo.rest_offsets()[k];
    rest[k] = Eigen::Vector3d(o[0], o[1], o[2]).normalized() * lengths[k];
  }

  Dataset ds;
  ds.topology = topo;
  ds.manifest.seed = spec.seed;
  ds.manifest.source = "synthetic";
  for (std::size_t s = 0; s < spec.num_sequences; ++s) {
    std::seed_seq seq_seed{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                           static_cast<std::uint32_t>(s), 0x9e3779b9u};
    std::mt19937_64 rng(seq_seed);
    const std::size_t action = s % std::size(kActionScale);
    const double amp = spec.amplitude * kActionScale[action];
    std::uniform_real_distribution<double> jitter(-spec.yaw_jitter, spec.yaw_jitter);
    const double yaw = spec.view_yaw + jitter(rng);

    // Three rotation-vector components per joint; the root's drive the
    // global orientation at half amplitude.
    std::vector<SmoothSignal> signals;
    signals.reserve(3 * j);
    for (std::size_t k = 0; k < 3 * j; ++k) signals.emplace_back(rng, spec.cutoff);

    PoseSeq3D pose(spec.frames, j);
    std::vector<Eigen::Matrix3d> global(j);
    std::vector<Eigen::Vector3d> pos(j);
    for (std::size_t f = 0; f < spec.frames; ++f) {
      const double t = static_cast<double>(f);
      for (int k : order) {
        const auto ku = static_cast<std::size_t>(k);
        const double a = topo.parent(ku) < 0 ? 0.5 * amp : amp;
        const Eigen::Vector3d w(a * signals[3 * ku](t), a * signals[3 * ku + 1](t), a * signals[3 * ku + 2](t));
        const double angle = w.norm();
        const Eigen::Matrix3d local =
            angle > 0.0 ? Eigen::AngleAxisd(angle, w / angle).toRotationMatrix() : Eigen::Matrix3d::Identity();
        const int p = topo.parent(ku);
        if (p < 0) {
          global[ku] = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()).toRotationMatrix() * local;
          pos[ku].setZero();
        } else {
          const auto pu = static_cast<std::size_t>(p);
          pos[ku] = pos[pu] + global[pu] * rest[ku];
          global[ku] = global[pu] * local;
        }
      }
      for (std::size_t k = 0; k < j; ++k)
        for (int c = 0; c < 3; ++c) pose(f, k, static_cast<std::size_t>(c)) = pos[k](c);
    }

    Sequence out;
    out.name = "synth" + std::to_string(s);
    out.action = "style" + std::to_string(action);
    out.pose2d = project(pose, spec.camera_depth);
    if (spec.noise_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, spec.noise_sigma);
      for (auto& v : out.pose2d.data()) v += noise(rng);
    }
    out.pose3d = std::move(pose);
    ds.sequences.push_back(std::move(out));
  }
  assign_splits(ds, spec.seed);
  return ds;
}

}  // namespace poselift
