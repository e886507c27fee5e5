#include <doctest.h>

#include <Eigen/Dense>

#include <numbers>

#include "poselift/synthetic.hpp"
#include "support.hpp"

using namespace poselift;
using std::numbers::pi;

namespace {

SkeletonTopology random_tree(std::size_t j, std::mt19937_64& rng) {
  std::vector<int> parents(j, -1);
  // Random labelling of a random recursive tree.
  std::vector<int> order(j);
  for (std::size_t i = 0; i < j; ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t k = 1; k < j; ++k) {
    std::uniform_int_distribution<std::size_t> d(0, k - 1);
    parents[static_cast<std::size_t>(order[k])] = order[d(rng)];
  }
  return SkeletonTopology(parents);
}

// |theta - (2c + 1) pi / (2n)| <= pi / (2n), rearranged to
// |2n theta - (2c + 1) pi| <= pi and evaluated where every product is exact.
bool within_half_bin(double theta, int c, int n) {
  const long double p = pi;
  return std::abs(static_cast<long double>(theta) * (2 * n) - (2 * c + 1) * p) <= p;
}

}  // namespace

TEST_CASE("topology validation") {
  CHECK_NOTHROW(SkeletonTopology({-1, 0, 1}));
  CHECK_THROWS_AS(SkeletonTopology({-1, -1}), ContractViolation);
  CHECK_THROWS_AS(SkeletonTopology({0, 0}), ContractViolation);
  CHECK_THROWS_AS(SkeletonTopology({-1, 2, 1}), ContractViolation);
  CHECK_THROWS_AS(SkeletonTopology({-1, 5}), ContractViolation);
  CHECK_THROWS_AS(SkeletonTopology(std::vector<int>{}), ContractViolation);

  const auto h36m = SkeletonTopology::human36m();
  CHECK(h36m.num_joints() == 17);
  CHECK(h36m.root_index() == 0);
  const auto again = SkeletonTopology::parse(h36m.serialize());
  CHECK(again.parents() == h36m.parents());
  CHECK(again.hash() == h36m.hash());
  CHECK(SkeletonTopology::load(testing::source_dir() / "configs/h36m17.topology").hash() == h36m.hash());
  CHECK_THROWS_AS(SkeletonTopology::parse("schema = other/1\nnum_joints = 1\nparents = -1\n"), ConfigError);
}

TEST_CASE("bone vectors") {
  const SkeletonTopology chain({-1, 0});
  PoseSeq3D pose(1, 2);
  pose(0, 1, 2) = 1.0;
  auto bones = compute_bone_vectors(pose, chain);
  CHECK(bones(0, 1, 0) == 0.0);
  CHECK(bones(0, 1, 1) == 0.0);
  CHECK(bones(0, 1, 2) == 1.0);

  std::mt19937_64 rng(7);
  const auto topo = SkeletonTopology::human36m();
  const auto p = testing::random_pose(3, 17, rng);
  bones = compute_bone_vectors(p, topo);
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t j = 0; j < 17; ++j)
      for (std::size_t c = 0; c < 3; ++c) {
        const int par = topo.parents()[j];
        const double expect = par < 0 ? 0.0 : p(f, j, c) - p(f, static_cast<std::size_t>(par), c);
        CHECK(bones(f, j, c) == expect);
      }

  // Summing bones along the chain from a joint to the root gives joint - root.
  for (std::size_t j = 0; j < 17; ++j) {
    double acc[3] = {0, 0, 0};
    for (int k = static_cast<int>(j); k >= 0; k = topo.parent(static_cast<std::size_t>(k)))
      for (std::size_t c = 0; c < 3; ++c) acc[c] += bones(1, static_cast<std::size_t>(k), c);
    for (std::size_t c = 0; c < 3; ++c) CHECK(acc[c] == doctest::Approx(p(1, j, c) - p(1, 0, c)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(compute_bone_vectors(PoseSeq3D(1, 3), chain), ContractViolation);
}

TEST_CASE("cartesian to spherical") {
  auto s = cart_to_spherical(Cartesian{0, 0, 1});
  CHECK(s.r == 1.0);
  CHECK(s.theta == 0.0);
  CHECK(s.phi == 0.0);
  s = cart_to_spherical(Cartesian{1, 0, 0});
  CHECK(s.theta == doctest::Approx(pi / 2));
  CHECK(s.phi == 0.0);
  s = cart_to_spherical(Cartesian{1, 1, 1});
  CHECK(s.r == doctest::Approx(std::sqrt(3.0)).epsilon(1e-14));
  CHECK(s.theta == doctest::Approx(0.9553166181245093).epsilon(1e-12));
  CHECK(s.phi == doctest::Approx(pi / 4).epsilon(1e-14));
  s = cart_to_spherical(Cartesian{0, 0, -1});
  CHECK(s.theta == doctest::Approx(pi).epsilon(1e-15));
  CHECK(s.phi == 0.0);

  // Degenerate defaults.
  s = cart_to_spherical(Cartesian{0, 0, 0});
  CHECK(s.r == 0.0);
  CHECK(s.theta == kDegenerateTheta);
  CHECK(s.phi == kDegeneratePhi);

  // phi wraps into [0, 2 pi) in every quadrant.
  s = cart_to_spherical(Cartesian{0, -1, 0});
  CHECK(s.phi == doctest::Approx(1.5 * pi));
  s = cart_to_spherical(Cartesian{-1, -1e-300, 0});
  CHECK(s.phi < 2 * pi);
  CHECK(s.phi >= 0.0);
}

TEST_CASE("spherical to cartesian") {
  auto c = spherical_to_cart(Spherical{1, 0, 2.5});
  CHECK(c.x == doctest::Approx(0.0));
  CHECK(c.y == doctest::Approx(0.0));
  CHECK(c.z == 1.0);
  c = spherical_to_cart(Spherical{1, pi / 2, pi / 2});
  CHECK(c.x == doctest::Approx(0.0));
  CHECK(c.y == doctest::Approx(1.0));
  CHECK(c.z == doctest::Approx(0.0));

  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const Cartesian v{n(rng), n(rng), n(rng)};
    const auto back = spherical_to_cart(cart_to_spherical(v));
    const double norm = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
    worst = std::max(worst, std::sqrt((back.x - v.x) * (back.x - v.x) + (back.y - v.y) * (back.y - v.y) +
                                      (back.z - v.z) * (back.z - v.z)) /
                                norm);
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("polar quantization") {
  CHECK(quantize_polar(0.3, 6) == 0);
  CHECK(quantize_polar(pi / 2, 6) == 3);
  CHECK(quantize_polar(pi, 6) == 5);
  CHECK(quantize_polar(0.0, 6) == 0);
  CHECK_THROWS_AS(quantize_polar(-0.1, 6), ContractViolation);
  CHECK_THROWS_AS(quantize_polar(3.2, 6), ContractViolation);
  CHECK_THROWS_AS(quantize_polar(1.0, 1), ContractViolation);

  CHECK(dequantize_polar(0, 6) == doctest::Approx(pi / 12));
  CHECK(dequantize_polar(5, 6) == doctest::Approx(11 * pi / 12));
  CHECK_THROWS_AS(dequantize_polar(6, 6), ContractViolation);
  CHECK_THROWS_AS(dequantize_polar(-1, 6), ContractViolation);

  // The rounded edge k pi / n may sit on either side of the true one; one ulp
  // either way decides it.
  for (int n = 2; n <= 12; ++n)
    for (int k = 1; k < n; ++k) {
      const double edge = k * pi / n;
      CHECK(quantize_polar(std::nextafter(edge, 4.0), n) == k);
      CHECK(quantize_polar(std::nextafter(edge, 0.0), n) == k - 1);
    }
  CHECK(quantize_polar(pi / 2, 4) == 2);

  long violations = 0;
  for (int n = 2; n <= 12; ++n)
    for (int i = 0; i <= 5000; ++i) {
      const double theta = pi * i / 5000.0;
      const int c = quantize_polar(theta, n);
      if (c < 0 || c >= n || !within_half_bin(theta, c, n)) ++violations;
    }
  CHECK(violations == 0);
}

TEST_CASE("depth recovery") {
  CHECK(recover_depth(1, 0, pi / 4) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(recover_depth(1, 1, pi / 2) == 0.0);
  CHECK(std::abs(recover_depth(3, 4, 1.19029) - 2.0) < 1e-3);
  CHECK(recover_depth(1, 0, 3 * pi / 4) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK_THROWS_AS(recover_depth(1, 0, 0.0), ContractViolation);
  CHECK_THROWS_AS(recover_depth(1, 0, pi), ContractViolation);

  // Exact inversion of the bone (3, 4, 2).
  const auto s = cart_to_spherical(Cartesian{3, 4, 2});
  CHECK(recover_depth(3, 4, s.theta) == doctest::Approx(2.0).epsilon(1e-12));

  // Sign follows the hemisphere.
  for (int n = 2; n <= 12; ++n)
    for (int c = 0; c < n; ++c) {
      const double theta = dequantize_polar(c, n);
      const double z = recover_depth(0.3, -0.7, theta);
      // Odd n puts a midpoint on pi / 2 itself.
      if (2 * c + 1 == n) CHECK(z == 0.0);
      else if (2 * c + 1 < n) CHECK(z > 0.0);
      else CHECK(z < 0.0);
    }
}

TEST_CASE("normalized adjacency") {
  auto a = build_adjacency(SkeletonTopology({-1}), AdjacencyDirection::forward);
  CHECK(a.joints == 1);
  CHECK(a(0, 0) == doctest::Approx(1.0));

  const SkeletonTopology chain({-1, 0, 1});
  a = build_adjacency(chain, AdjacencyDirection::forward);
  CHECK(a(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-14));
  CHECK(a(1, 2) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-14));
  CHECK(a(0, 2) == 0.0);
  CHECK(a(0, 0) == doctest::Approx(0.5));
  CHECK(a(1, 1) == doctest::Approx(1.0 / 3.0));
  const auto b = build_adjacency(chain, AdjacencyDirection::backward);
  CHECK(b.direction == AdjacencyDirection::backward);
  CHECK(testing::max_abs_diff(a.matrix, b.matrix) == 0.0);

  // Backward is the index-reversal conjugate of forward.
  const auto topo = SkeletonTopology::human36m();
  const auto f = build_adjacency(topo, AdjacencyDirection::forward);
  const auto r = build_adjacency(topo, AdjacencyDirection::backward);
  for (std::size_t i = 0; i < 17; ++i)
    for (std::size_t k = 0; k < 17; ++k) CHECK(r(i, k) == doctest::Approx(f(16 - i, 16 - k)).epsilon(1e-15));

  std::mt19937_64 rng(3);
  for (std::size_t j = 1; j <= 17; ++j)
    for (int rep = 0; rep < 5; ++rep) {
      const auto t = random_tree(j, rng);
      for (auto dir : {AdjacencyDirection::forward, AdjacencyDirection::backward}) {
        const auto adj = build_adjacency(t, dir);
        Eigen::MatrixXd m(j, j);
        for (std::size_t i = 0; i < j; ++i)
          for (std::size_t k = 0; k < j; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = adj(i, k);
        CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
        for (std::size_t i = 0; i < j; ++i) CHECK(adj(i, i) > 0.0);
        const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues();
        CHECK(ev.maxCoeff() <= 1.0 + 1e-12);
        CHECK(ev.minCoeff() >= -1.0 - 1e-12);
      }
    }
}

TEST_CASE("assemble bone spherical") {
  const SkeletonTopology chain({-1, 0, 0});
  PoseSeq2D s2d(1, 3);
  s2d(0, 1, 0) = 1.0;  // bone (1, 0); joint 2 coincides with the root
  PolarCategories cats(1, 3, 6);
  cats(0, 1) = 3;
  cats(0, 2) = 1;
  const auto b = assemble_bone_spherical(s2d, cats, chain);
  CHECK(b(0, 1, 1) == 7 * pi / 12);
  CHECK(b(0, 1, 0) == doctest::Approx(1.0 / std::sin(7 * pi / 12)));
  CHECK(b(0, 2, 0) == 0.0);
  CHECK(b(0, 2, 1) == kDegenerateTheta);
  CHECK(b(0, 2, 2) == kDegeneratePhi);
  CHECK(b(0, 0, 0) == 0.0);
  CHECK(b(0, 0, 1) == kDegenerateTheta);
  CHECK(b(0, 0, 2) == kDegeneratePhi);

  // Ground-truth bins on synthetic motion: recovered depth error follows from
  // |dtheta| <= pi / (2n): |z - z_true| <= rho * |cot(theta_mid) - cot(theta_true)|.
  SyntheticSpec spec;
  spec.num_sequences = 3;
  spec.frames = 20;
  spec.seed = 4;
  const auto ds = generate_synthetic(spec);
  const auto& topo = ds.topology;
  const int n = 6;
  for (const auto& seq : ds.sequences) {
    const auto bones = compute_bone_vectors(seq.pose3d, topo);
    PolarCategories truth(seq.pose3d.frames(), 17, n);
    PoseSeq2D planar(seq.pose3d.frames(), 17);
    for (std::size_t f = 0; f < planar.frames(); ++f)
      for (std::size_t j = 0; j < 17; ++j) {
        planar(f, j, 0) = seq.pose3d(f, j, 0);
        planar(f, j, 1) = seq.pose3d(f, j, 1);
        const auto sph = cart_to_spherical(Cartesian{bones(f, j, 0), bones(f, j, 1), bones(f, j, 2)});
        truth(f, j) = topo.parent(j) < 0 ? 3 : quantize_polar(sph.theta, n);
      }
    const auto rec = spherical_to_cart(assemble_bone_spherical(planar, truth, topo));
    for (std::size_t f = 0; f < planar.frames(); ++f)
      for (std::size_t j = 1; j < 17; ++j) {
        const double x = bones(f, j, 0), y = bones(f, j, 1), z = bones(f, j, 2);
        const double rho = std::hypot(x, y);
        const double theta = std::atan2(rho, z);
        const double mid = dequantize_polar(truth(f, j), n);
        const double bound = rho * std::abs(1.0 / std::tan(mid) - 1.0 / std::tan(theta)) + 1e-9;
        CHECK(std::abs(rec(f, j, 2) - z) <= bound);
        CHECK(std::abs(mid - theta) <= pi / (2 * n) + 1e-12);
        CHECK(rec(f, j, 0) == doctest::Approx(x).epsilon(1e-9));
      }
  }
}
