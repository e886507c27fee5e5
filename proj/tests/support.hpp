#pragma once

// Shared fixtures for the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "poselift/config.hpp"
#include "poselift/module.hpp"
#include "poselift/skeleton.hpp"
#include "poselift/tensor.hpp"

namespace testing {

using namespace poselift;

inline std::filesystem::path source_dir() { return POSELIFT_SOURCE_DIR; }

inline SkeletonTopology micro_topology() { return SkeletonTopology::load(source_dir() / "configs/micro5.topology"); }

// f = 8, j = 5, D = 16, L = 2, N = 4.
inline ModelConfig micro_config() {
  auto c = ModelConfig::tiny();
  c.frames = 8;
  c.joints = 5;
  c.dim = 16;
  c.depth = 2;
  c.state = 4;
  c.bone_dim = 16;
  c.bone_depth = 2;
  c.dropout = 0.0;
  return c;
}

inline std::vector<double> normal_values(std::size_t n, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> d(0.0, sigma);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline ad::Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, double sigma = 1.0, bool grad = false) {
  const auto n = ad::numel(shape);
  return ad::Tensor(std::move(shape), normal_values(n, rng, sigma), grad);
}

inline PoseSeq3D random_pose(std::size_t f, std::size_t j, std::mt19937_64& rng, double sigma = 300.0) {
  return PoseSeq3D(f, j, normal_values(f * j * 3, rng, sigma));
}

inline PoseSeq2D random_pose2d(std::size_t f, std::size_t j, std::mt19937_64& rng, double sigma = 300.0) {
  return PoseSeq2D(f, j, normal_values(f * j * 2, rng, sigma));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

// sum(w * y) for a fixed random w: a scalar whose gradient reaches every
// output element with a distinct weight.
inline ad::Tensor probe_loss(const ad::Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(y, random_tensor(y.shape(), rng)));
}

struct GroupError {
  std::string name;
  double relative = 0.0;
  double analytic_norm = 0.0;
};

// Central differences on a sample of coordinates of every tensor in
// `params`. Per tensor the error is ||g_ad - g_fd|| / max(||g_ad||, ||g_fd||)
// over the sampled coordinates, with an absolute floor for vanishing groups.
// Ridders' extrapolation over shrinking central differences, h is the starting step.
// Returns the tableau entry with the smallest internal error estimate.
inline double ridders(const std::function<double(double)>& central, double h) {
  constexpr int kTab = 10;
  constexpr double kShrink = 2.0, kShrink2 = kShrink * kShrink;
  double a[kTab][kTab];
  a[0][0] = central(h);
  double best = a[0][0], err = std::numeric_limits<double>::infinity();
  for (int i = 1; i < kTab; ++i) {
    h /= kShrink;
    a[0][i] = central(h);
    double fac = kShrink2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink2;
      const double e = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (e <= err) {
        err = e;
        best = a[j][i];
      }
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= 2.0 * err) break;
  }
  return best;
}

inline std::vector<GroupError> gradient_check(ParamSet& params, const std::function<ad::Tensor()>& loss,
                                              std::size_t samples, std::uint64_t seed, double h = 1e-5,
                                              bool extrapolate = false,
                                              const std::vector<std::string>& only = {}) {
  params.zero_grad();
  loss().backward();
  std::mt19937_64 rng(seed);
  std::vector<GroupError> out;
  for (auto& [name, t] : params.params) {
    if (!t.requires_grad()) continue;
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto n = t.size();
    std::vector<std::size_t> idx{0, n - 1};
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (idx.size() < std::min(samples, n)) idx.push_back(pick(rng));
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());

    double diff = 0.0, na = 0.0, nf = 0.0;
    for (auto i : idx) {
      const double ga = t.grad().empty() ? 0.0 : t.grad()[i];
      double& v = t.mutable_data()[i];
      const double keep = v;
      const auto at = [&](double d) {
        ad::NoGradGuard guard;
        v = keep + d;
        return loss().item();
      };
      const auto central = [&](double step) { return (at(step) - at(-step)) / (2.0 * step); };
      const double gf = extrapolate ? ridders(central, h) : central(h);
      v = keep;
      diff += (ga - gf) * (ga - gf);
      na += ga * ga;
      nf += gf * gf;
    }
    const double scale = std::max({std::sqrt(na), std::sqrt(nf), 1e-6});
    out.push_back({name, std::sqrt(diff) / scale, std::sqrt(na)});
  }
  return out;
}

inline double worst(const std::vector<GroupError>& errs) {
  double w = 0.0;
  for (const auto& e : errs) w = std::max(w, e.relative);
  return w;
}

}  // namespace testing
