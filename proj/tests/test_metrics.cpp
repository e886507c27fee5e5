#include <doctest.h>

#include <Eigen/Geometry>

#include <cmath>

#include "poselift/metrics.hpp"
#include "poselift/ops.hpp"
#include "support.hpp"

using namespace poselift;

namespace {

double dist(const PoseSeq3D& a, const PoseSeq3D& b, std::size_t f, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < 3; ++c) s += (a(f, j, c) - b(f, j, c)) * (a(f, j, c) - b(f, j, c));
  return std::sqrt(s);
}

double loop_mpjpe(const PoseSeq3D& a, const PoseSeq3D& b) {
  double s = 0.0;
  for (std::size_t f = 0; f < a.frames(); ++f)
    for (std::size_t j = 0; j < a.joints(); ++j) s += dist(a, b, f, j);
  return s / static_cast<double>(a.frames() * a.joints());
}

PoseSeq3D similarity(const PoseSeq3D& gt, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> s(0.2, 5.0);
  PoseSeq3D out(gt.frames(), gt.joints());
  for (std::size_t f = 0; f < gt.frames(); ++f) {
    const Eigen::Matrix3d R = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
    const double k = s(rng);
    const Eigen::Vector3d t(500 * n(rng), 500 * n(rng), 500 * n(rng));
    for (std::size_t j = 0; j < gt.joints(); ++j) {
      const Eigen::Vector3d p = k * R * Eigen::Vector3d(gt(f, j, 0), gt(f, j, 1), gt(f, j, 2)) + t;
      for (std::size_t c = 0; c < 3; ++c) out(f, j, c) = p(static_cast<Eigen::Index>(c));
    }
  }
  return out;
}

PoseSeq3D offset(const PoseSeq3D& p, double dx) {
  auto out = p;
  for (std::size_t f = 0; f < p.frames(); ++f)
    for (std::size_t j = 0; j < p.joints(); ++j) out(f, j, 0) += dx;
  return out;
}

PoseSeq3D constant_in_time(std::size_t f, std::size_t j, std::mt19937_64& rng) {
  const auto frame = testing::random_pose(1, j, rng);
  PoseSeq3D out(f, j);
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t k = 0; k < j; ++k)
      for (std::size_t c = 0; c < 3; ++c) out(t, k, c) = frame(0, k, c);
  return out;
}

}  // namespace

TEST_CASE("mpjpe") {
  std::mt19937_64 rng(1);
  const auto gt = testing::random_pose(5, 17, rng);
  CHECK(mpjpe(gt, gt) == 0.0);
  CHECK(mpjpe(offset(gt, 10.0), gt) == doctest::Approx(10.0).epsilon(1e-12));
  for (int rep = 0; rep < 10; ++rep) {
    const auto a = testing::random_pose(4, 17, rng), b = testing::random_pose(4, 17, rng);
    CHECK(std::abs(mpjpe(a, b) - loop_mpjpe(a, b)) < 1e-10);
  }
  CHECK_THROWS_AS(mpjpe(gt, testing::random_pose(5, 16, rng)), ContractViolation);
  CHECK_THROWS_AS(mpjpe(gt, testing::random_pose(4, 17, rng)), ContractViolation);
}

TEST_CASE("procrustes-aligned mpjpe") {
  std::mt19937_64 rng(2);
  const auto gt = testing::random_pose(6, 17, rng);
  CHECK(p_mpjpe(gt, gt) < 1e-9);
  for (int rep = 0; rep < 20; ++rep) CHECK(p_mpjpe(similarity(gt, rng), gt) < 1e-6);

  // Reflections are not removed.
  auto mirrored = gt;
  for (std::size_t f = 0; f < 6; ++f)
    for (std::size_t j = 0; j < 17; ++j) mirrored(f, j, 0) = -mirrored(f, j, 0);
  CHECK(p_mpjpe(mirrored, gt) > 1.0);

  // A collapsed frame skips alignment and is reported.
  PoseSeq3D collapsed(2, 17);
  for (std::size_t j = 0; j < 17; ++j)
    for (std::size_t c = 0; c < 3; ++c) collapsed(1, j, c) = 5.0;
  for (std::size_t j = 0; j < 17; ++j)
    for (std::size_t c = 0; c < 3; ++c) collapsed(0, j, c) = gt(0, j, c);
  PoseSeq3D two(2, 17);
  for (std::size_t f = 0; f < 2; ++f)
    for (std::size_t j = 0; j < 17; ++j)
      for (std::size_t c = 0; c < 3; ++c) two(f, j, c) = gt(f, j, c);
  const auto r = p_mpjpe_detailed(collapsed, two);
  CHECK(r.degenerate_frames == 1);
  PoseSeq3D frame1_pred(1, 17), frame1_gt(1, 17);
  for (std::size_t j = 0; j < 17; ++j)
    for (std::size_t c = 0; c < 3; ++c) {
      frame1_pred(0, j, c) = 5.0;
      frame1_gt(0, j, c) = gt(1, j, c);
    }
  CHECK(r.error_mm == doctest::Approx(0.5 * mpjpe(frame1_pred, frame1_gt)).epsilon(1e-9));
}

TEST_CASE("scale-aligned mpjpe") {
  std::mt19937_64 rng(3);
  const auto gt = testing::random_pose(4, 17, rng);
  auto twice = gt;
  for (auto& v : twice.data()) v *= 2.0;
  CHECK(n_mpjpe(twice, gt) < 1e-9);
  CHECK(n_mpjpe(gt, gt) < 1e-12);
  // Zero prediction keeps s = 1.
  const PoseSeq3D zero(4, 17);
  CHECK(n_mpjpe(zero, gt) == doctest::Approx(mpjpe(zero, gt)));
}

TEST_CASE("aligned errors against raw mpjpe") {
  // Large isotropic noise: alignment only helps.
  std::mt19937_64 rng(4);
  long violations = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto gt = testing::random_pose(3, 17, rng);
    auto pred = gt;
    std::normal_distribution<double> noise(0.0, 400.0);
    for (auto& v : pred.data()) v += noise(rng);
    const double m = mpjpe(pred, gt);
    violations += p_mpjpe(pred, gt) > m + 1e-9;
    violations += n_mpjpe(pred, gt) > m + 1e-9;
  }
  CHECK(violations == 0);

  // The least-squares fit spreads a single outlier over every joint, so the
  // mean distance can grow.
  const auto gt = testing::random_pose(1, 17, rng);
  auto pred = gt;
  pred(0, 16, 0) += 1000.0;
  CHECK(mpjpe(pred, gt) == doctest::Approx(1000.0 / 17.0));
  CHECK(p_mpjpe(pred, gt) > mpjpe(pred, gt));
}

TEST_CASE("velocity error") {
  std::mt19937_64 rng(5);
  const auto a = constant_in_time(6, 17, rng), b = constant_in_time(6, 17, rng);
  CHECK(mpjve(a, b) == 0.0);
  const auto m = testing::random_pose(6, 17, rng);
  CHECK(mpjve(m, m) == 0.0);
  const auto p = testing::random_pose(6, 17, rng);
  double s = 0.0;
  for (std::size_t f = 1; f < 6; ++f)
    for (std::size_t j = 0; j < 17; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double e = (p(f, j, c) - p(f - 1, j, c)) - (m(f, j, c) - m(f - 1, j, c));
        d += e * e;
      }
      s += std::sqrt(d);
    }
  CHECK(mpjve(p, m) == doctest::Approx(s / (5 * 17)).epsilon(1e-12));
  CHECK_THROWS_AS(mpjve(testing::random_pose(1, 17, rng), testing::random_pose(1, 17, rng)), ContractViolation);
}

TEST_CASE("pck and auc") {
  std::mt19937_64 rng(6);
  const auto gt = testing::random_pose(3, 17, rng);
  CHECK(pck(gt, gt) == 100.0);
  PoseSeq3D two(1, 2), two_gt(1, 2);
  two(0, 0, 0) = 200.0;
  CHECK(pck(two, two_gt) == 50.0);

  const auto pred = testing::random_pose(3, 17, rng, 120.0);
  for (double thr : {50.0, 150.0, 300.0}) {
    long hit = 0;
    for (std::size_t f = 0; f < 3; ++f)
      for (std::size_t j = 0; j < 17; ++j) hit += dist(pred, gt, f, j) < thr;
    CHECK(pck(pred, gt, thr) == doctest::Approx(100.0 * static_cast<double>(hit) / 51.0));
  }
  double prev = -1.0, mean = 0.0;
  const auto grid = auc_thresholds();
  CHECK(grid.size() == 30);
  CHECK(grid.front() == 5.0);
  CHECK(grid.back() == 150.0);
  for (double t : grid) {
    const double v = pck(pred, gt, t);
    CHECK(v >= prev);
    prev = v;
    mean += v / 100.0 / 30.0;
  }
  CHECK(auc(pred, gt) == doctest::Approx(mean).epsilon(1e-12));

  CHECK(auc(gt, gt) == 1.0);
  CHECK(auc(offset(gt, 1000.0), gt) == 0.0);
  // Integer coordinates keep the 80 mm offset exact.
  auto grid_pose = gt;
  for (auto& v : grid_pose.data()) v = std::round(v);
  CHECK(auc(offset(grid_pose, 80.0), grid_pose) == doctest::Approx(14.0 / 30.0).epsilon(1e-12));
}

TEST_CASE("stage losses") {
  std::mt19937_64 rng(7);
  const auto gt = testing::random_pose(5, 17, rng);
  CHECK(stage2_loss(gt, gt) == 0.0);
  const auto still = constant_in_time(5, 17, rng);
  const auto moved = offset(still, 10.0);
  CHECK(stage2_loss(moved, still) == doctest::Approx(10.0 + 0.5 * n_mpjpe(moved, still)).epsilon(1e-12));
  const auto p = testing::random_pose(5, 17, rng);
  CHECK(stage2_loss(p, gt) ==
        doctest::Approx(mpjpe(p, gt) + 0.5 * n_mpjpe(p, gt) + 20.0 * mpjve(p, gt)).epsilon(1e-12));

  PolarCategories labels(2, 3, 6);
  for (std::size_t i = 0; i < 6; ++i) labels.data[i] = static_cast<int>(i % 6);
  CategoryProbabilities onehot{2, 3, 6, std::vector<double>(36, 0.0)};
  for (std::size_t i = 0; i < 6; ++i) onehot.data[i * 6 + static_cast<std::size_t>(labels.data[i])] = 1.0;
  CHECK(stage1_loss(onehot, labels) == 0.0);
  CategoryProbabilities uniform{2, 3, 6, std::vector<double>(36, 1.0 / 6.0)};
  CHECK(stage1_loss(uniform, labels) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  CHECK(std::log(6.0) == doctest::Approx(1.7918).epsilon(1e-4));
  // A zero at the true label is clamped.
  CategoryProbabilities wrong{2, 3, 6, std::vector<double>(36, 0.0)};
  for (std::size_t i = 0; i < 6; ++i) wrong.data[i * 6 + static_cast<std::size_t>((labels.data[i] + 1) % 6)] = 1.0;
  CHECK(stage1_loss(wrong, labels) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));

  std::uniform_real_distribution<double> u(0.01, 1.0);
  CategoryProbabilities rnd{2, 3, 6, {}};
  for (int i = 0; i < 36; ++i) rnd.data.push_back(u(rng));
  double expect = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    double z = 0.0;
    for (std::size_t k = 0; k < 6; ++k) z += rnd.data[i * 6 + k];
    for (std::size_t k = 0; k < 6; ++k) rnd.data[i * 6 + k] /= z;
    expect -= std::log(rnd.data[i * 6 + static_cast<std::size_t>(labels.data[i])]) / 6.0;
  }
  CHECK(stage1_loss(rnd, labels) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("re-rooting and invariances") {
  const auto topo = SkeletonTopology::human36m();
  std::mt19937_64 rng(8);
  const auto pred = testing::random_pose(4, 17, rng), gt = testing::random_pose(4, 17, rng);
  const auto rp = reroot(pred, topo), rg = reroot(gt, topo);
  for (std::size_t f = 0; f < 4; ++f)
    for (std::size_t c = 0; c < 3; ++c) CHECK(rp(f, 0, c) == 0.0);

  // Per-frame translations vanish after re-rooting.
  auto shifted = pred;
  std::normal_distribution<double> n(0.0, 800.0);
  for (std::size_t f = 0; f < 4; ++f) {
    const double t[3] = {n(rng), n(rng), n(rng)};
    for (std::size_t j = 0; j < 17; ++j)
      for (std::size_t c = 0; c < 3; ++c) shifted(f, j, c) += t[c];
  }
  const auto rs = reroot(shifted, topo);
  CHECK(mpjpe(rs, rg) == doctest::Approx(mpjpe(rp, rg)).epsilon(1e-12));
  CHECK(p_mpjpe(rs, rg) == doctest::Approx(p_mpjpe(rp, rg)).epsilon(1e-9));
  CHECK(n_mpjpe(rs, rg) == doctest::Approx(n_mpjpe(rp, rg)).epsilon(1e-9));
  CHECK(pck(rs, rg) == pck(rp, rg));

  // Accumulated metrics ignore batch order.
  std::vector<PoseSeq3D> ps, gs;
  for (int i = 0; i < 4; ++i) {
    ps.push_back(reroot(testing::random_pose(3 + static_cast<std::size_t>(i), 17, rng), topo));
    gs.push_back(reroot(testing::random_pose(3 + static_cast<std::size_t>(i), 17, rng), topo));
  }
  MetricAccumulator fwd, rev;
  for (int i = 0; i < 4; ++i) fwd.add(ps[static_cast<std::size_t>(i)], gs[static_cast<std::size_t>(i)], i % 2 ? "walk" : "sit");
  for (int i = 3; i >= 0; --i) rev.add(ps[static_cast<std::size_t>(i)], gs[static_cast<std::size_t>(i)], i % 2 ? "walk" : "sit");
  const auto a = fwd.overall(), b = rev.overall();
  CHECK(a.mpjpe_mm == doctest::Approx(b.mpjpe_mm).epsilon(1e-12));
  CHECK(a.p_mpjpe_mm == doctest::Approx(b.p_mpjpe_mm).epsilon(1e-12));
  CHECK(a.mpjve_mm == doctest::Approx(b.mpjve_mm).epsilon(1e-12));
  CHECK(a.auc == doctest::Approx(b.auc).epsilon(1e-12));
  CHECK(a.frames == 18);
  // Frame-weighted overall value.
  double weighted = 0.0;
  for (std::size_t i = 0; i < 4; ++i) weighted += mpjpe(ps[i], gs[i]) * static_cast<double>(ps[i].frames());
  CHECK(a.mpjpe_mm == doctest::Approx(weighted / 18.0).epsilon(1e-12));
  const auto per = fwd.per_action();
  CHECK(per.size() == 2);
  CHECK(per.at("sit").frames == 3 + 5);
}

TEST_CASE("metric report keys") {
  MetricReport r;
  r.overall.mpjpe_mm = 12.5;
  r.overall.frames = 10;
  r.per_action["walk"] = r.overall;
  r.info["split"] = "val";
  const auto doc = r.to_doc();
  for (const char* k : {"metric.mpjpe_mm", "metric.p_mpjpe_mm", "metric.n_mpjpe_mm", "metric.mpjve_mm",
                        "metric.pck_percent", "metric.auc", "metric.frames", "metric.degenerate_frames",
                        "action.walk.mpjpe_mm", "info.split"})
    CHECK(doc.has(k));
  CHECK(doc.get_double("metric.mpjpe_mm") == 12.5);
  CHECK(KeyValueDoc::parse(r.serialize()).entries() == doc.entries());
  CHECK(r.action_table().find("walk") != std::string::npos);
}

TEST_CASE("differentiable losses agree with the metrics") {
  std::mt19937_64 rng(9);
  const auto p0 = testing::random_pose(6, 5, rng), g0 = testing::random_pose(6, 5, rng);
  const auto p1 = testing::random_pose(6, 5, rng), g1 = testing::random_pose(6, 5, rng);
  const auto pred = pack_poses(std::vector<const PoseSeq3D*>{&p0, &p1});
  const auto gt = pack_poses(std::vector<const PoseSeq3D*>{&g0, &g1});
  auto mean2 = [](double a, double b) { return 0.5 * (a + b); };
  CHECK(ad::mpjpe_loss(pred, gt).item() == doctest::Approx(mean2(mpjpe(p0, g0), mpjpe(p1, g1))).epsilon(1e-12));
  CHECK(ad::n_mpjpe_loss(pred, gt).item() == doctest::Approx(mean2(n_mpjpe(p0, g0), n_mpjpe(p1, g1))).epsilon(1e-12));
  CHECK(ad::mpjve_loss(pred, gt).item() == doctest::Approx(mean2(mpjve(p0, g0), mpjve(p1, g1))).epsilon(1e-12));
  CHECK(ad::stage2_loss(pred, gt).item() ==
        doctest::Approx(mean2(stage2_loss(p0, g0), stage2_loss(p1, g1))).epsilon(1e-12));

  auto leaf = pred.detach();
  leaf.set_requires_grad(true);
  ParamSet ps;
  ps.add("pred", leaf);
  for (const auto& fn : {ad::mpjpe_loss, ad::n_mpjpe_loss, ad::mpjve_loss, ad::stage2_loss}) {
    const auto errs = testing::gradient_check(ps, [&] { return fn(leaf, gt); }, 1000, 1, 1e-4);
    CHECK(testing::worst(errs) < 1e-6);
  }

  // Cross-entropy on logits matches the probability form.
  const ad::Tensor logits({1, 2, 3, 6}, testing::normal_values(36, rng));
  PolarCategories labels(2, 3, 6);
  for (std::size_t i = 0; i < 6; ++i) labels.data[i] = static_cast<int>((i * 5) % 6);
  const auto probs = ad::softmax(logits);
  CHECK(ad::cross_entropy(logits, labels.data).item() ==
        doctest::Approx(stage1_loss(CategoryProbabilities{2, 3, 6, probs.values()}, labels)).epsilon(1e-12));
}
