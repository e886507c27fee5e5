#include "poselift/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "poselift/ops.hpp"

namespace poselift {

namespace {

void check_pair(const PoseSeq3D& pred, const PoseSeq3D& gt, const char* what) {
  require(pred.frames() == gt.frames() && pred.joints() == gt.joints(),
          std::string(what) + ": prediction is " + std::to_string(pred.frames()) + "x" +
              std::to_string(pred.joints()) + ", ground truth is " + std::to_string(gt.frames()) +
              "x" + std::to_string(gt.joints()));
  require(pred.frames() > 0 && pred.joints() > 0, std::string(what) + ": empty sequence");
}

double dist(const PoseSeq3D& a, const PoseSeq3D& b, std::size_t f, std::size_t j) {
  const double dx = a(f, j, 0) - b(f, j, 0), dy = a(f, j, 1) - b(f, j, 1), dz = a(f, j, 2) - b(f, j, 2);
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double sum_distance(const PoseSeq3D& pred, const PoseSeq3D& gt) {
  double total = 0.0;
  for (std::size_t f = 0; f < pred.frames(); ++f)
    for (std::size_t j = 0; j < pred.joints(); ++j) total += dist(pred, gt, f, j);
  return total;
}

// Per-frame similarity alignment of pred onto gt. Returns the summed distance
// and counts frames that could not be aligned.
double procrustes_sum(const PoseSeq3D& pred, const PoseSeq3D& gt, std::size_t& degenerate) {
  const std::size_t j = pred.joints();
  double total = 0.0;
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, 3>;
  for (std::size_t f = 0; f < pred.frames(); ++f) {
    Mat p(j, 3), g(j, 3);
    for (std::size_t k = 0; k < j; ++k)
      for (int c = 0; c < 3; ++c) {
        p(k, c) = pred(f, k, c);
        g(k, c) = gt(f, k, c);
      }
    if (p == g) continue;  // already aligned; skip SVD round-off
    const Eigen::RowVector3d mp = p.colwise().mean(), mg = g.colwise().mean();
    p.rowwise() -= mp;
    g.rowwise() -= mg;
    const double var_p = p.squaredNorm(), var_g = g.squaredNorm();
    if (var_p < 1e-18 * (1.0 + var_g) || var_g < 1e-18 * (1.0 + var_p)) {
      ++degenerate;
      for (std::size_t k = 0; k < j; ++k) total += dist(pred, gt, f, k);
      continue;
    }
    const Eigen::Matrix3d cov = g.transpose() * p;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d d(1.0, 1.0, 1.0);
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2) = -1.0;
    const Eigen::Matrix3d rot = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
    const double s = svd.singularValues().dot(d) / var_p;
    const Mat aligned = s * p * rot.transpose();
    total += (aligned - g).rowwise().norm().sum();
  }
  return total;
}

double scale_aligned_sum(const PoseSeq3D& pred, const PoseSeq3D& gt) {
  double total = 0.0;
  for (std::size_t f = 0; f < pred.frames(); ++f) {
    double pg = 0.0, pp = 0.0;
    for (std::size_t j = 0; j < pred.joints(); ++j)
      for (int c = 0; c < 3; ++c) {
        pg += pred(f, j, c) * gt(f, j, c);
        pp += pred(f, j, c) * pred(f, j, c);
      }
    const double s = pp > 0.0 ? pg / pp : 1.0;
    for (std::size_t j = 0; j < pred.joints(); ++j) {
      double sq = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = s * pred(f, j, c) - gt(f, j, c);
        sq += d * d;
      }
      total += std::sqrt(sq);
    }
  }
  return total;
}

double velocity_sum(const PoseSeq3D& pred, const PoseSeq3D& gt) {
  double total = 0.0;
  for (std::size_t f = 1; f < pred.frames(); ++f)
    for (std::size_t j = 0; j < pred.joints(); ++j) {
      double sq = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = (pred(f, j, c) - pred(f - 1, j, c)) - (gt(f, j, c) - gt(f - 1, j, c));
        sq += d * d;
      }
      total += std::sqrt(sq);
    }
  return total;
}

std::size_t count_below(const PoseSeq3D& pred, const PoseSeq3D& gt, double threshold) {
  std::size_t hits = 0;
  for (std::size_t f = 0; f < pred.frames(); ++f)
    for (std::size_t j = 0; j < pred.joints(); ++j)
      if (dist(pred, gt, f, j) < threshold) ++hits;
  return hits;
}

double auc_sum(const PoseSeq3D& pred, const PoseSeq3D& gt) {
  // Fraction of joints under each threshold, summed over the grid; one pass
  // over the distances.
  const auto grid = auc_thresholds();
  std::vector<std::size_t> hits(grid.size(), 0);
  for (std::size_t f = 0; f < pred.frames(); ++f)
    for (std::size_t j = 0; j < pred.joints(); ++j) {
      const double d = dist(pred, gt, f, j);
      for (std::size_t t = 0; t < grid.size(); ++t)
        if (d < grid[t]) ++hits[t];
    }
  double total = 0.0;
  for (auto h : hits) total += static_cast<double>(h);
  return total / static_cast<double>(grid.size() * pred.joints());
}

}  // namespace

double mpjpe(const PoseSeq3D& pred, const PoseSeq3D& gt) {
  check_pair(pred, gt, "mpjpe");
  return sum_distance(pred, gt) / static_cast<double>(pred.frames() * pred.joints());
}

ProcrustesResult p_mpjpe_detailed(const PoseSeq3D& pred, const PoseSeq3D& gt) {
  check_pair(pred, gt, "p_mpjpe");
  ProcrustesResult r;
  r.error_mm = procrustes_sum(pred, gt, r.degenerate_frames) /
               static_cast<double>(pred.frames() * pred.joints());
  return r;
}

double p_mpjpe(const PoseSeq3D& pred, const PoseSeq3D& gt) { return p_mpjpe_detailed(pred, gt).error_mm; }

double n_mpjpe(const PoseSeq3D& pred, const PoseSeq3D& gt) {
  check_pair(pred, gt, "n_mpjpe");
  return scale_aligned_sum(pred, gt) / static_cast<double>(pred.frames() * pred.joints());
}

double mpjve(const PoseSeq3D& pred, const PoseSeq3D& gt) {
  check_pair(pred, gt, "mpjve");
  require(pred.frames() >= 2, "mpjve needs at least 2 frames, got " + std::to_string(pred.frames()));
  return velocity_sum(pred, gt) / static_cast<double>((pred.frames() - 1) * pred.joints());
}

double pck(const PoseSeq3D& pred, const PoseSeq3D& gt, double threshold_mm) {
  check_pair(pred, gt, "pck");
  return 100.0 * static_cast<double>(count_below(pred, gt, threshold_mm)) /
         static_cast<double>(pred.frames() * pred.joints());
}

std::vector<double> auc_thresholds() {
  std::vector<double> grid;
  for (int t = 5; t <= 150; t += 5) grid.push_back(static_cast<double>(t));
  return grid;
}

double auc(const PoseSeq3D& pred, const PoseSeq3D& gt) {
  check_pair(pred, gt, "auc");
  return auc_sum(pred, gt) / static_cast<double>(pred.frames());
}

double stage2_loss(const PoseSeq3D& pred, const PoseSeq3D& gt) {
  return mpjpe(pred, gt) + 0.5 * n_mpjpe(pred, gt) + 20.0 * mpjve(pred, gt);
}

double stage1_loss(const CategoryProbabilities& probs, const PolarCategories& labels) {
  require(probs.frames == labels.frames && probs.joints == labels.joints &&
              probs.num_categories == labels.num_categories,
          "stage1_loss: probabilities and labels disagree in shape");
  require(probs.frames * probs.joints > 0, "stage1_loss: empty input");
  double total = 0.0;
  for (std::size_t f = 0; f < probs.frames; ++f)
    for (std::size_t j = 0; j < probs.joints; ++j) {
      const int c = labels(f, j);
      require(c >= 0 && c < probs.num_categories, "stage1_loss: label out of range");
      total -= std::log(std::max(probs(f, j, c), 1e-12));
    }
  return total / static_cast<double>(probs.frames * probs.joints);
}

PoseSeq3D reroot(const PoseSeq3D& pose, const SkeletonTopology& topo) {
  require(pose.joints() == topo.num_joints(), "reroot: pose has " + std::to_string(pose.joints()) +
                                                  " joints, topology has " +
                                                  std::to_string(topo.num_joints()));
  PoseSeq3D out(pose.frames(), pose.joints());
  const auto root = topo.root_index();
  for (std::size_t f = 0; f < pose.frames(); ++f)
    for (std::size_t j = 0; j < pose.joints(); ++j)
      for (int c = 0; c < 3; ++c) out(f, j, c) = pose(f, j, c) - pose(f, root, c);
  return out;
}

void MetricAccumulator::Sums::add(const PoseSeq3D& pred, const PoseSeq3D& gt) {
  check_pair(pred, gt, "metrics");
  const double jn = static_cast<double>(pred.joints());
  mpjpe += sum_distance(pred, gt) / jn;
  p_mpjpe += procrustes_sum(pred, gt, degenerate) / jn;
  n_mpjpe += scale_aligned_sum(pred, gt) / jn;
  if (pred.frames() >= 2) {
    mpjve += velocity_sum(pred, gt) / jn;
    velocity_frames += pred.frames() - 1;
  }
  pck += 100.0 * static_cast<double>(count_below(pred, gt, 150.0)) / jn;
  auc += auc_sum(pred, gt);
  frames += pred.frames();
}

MetricValues MetricAccumulator::Sums::finish() const {
  MetricValues v;
  v.frames = frames;
  v.degenerate_frames = degenerate;
  if (frames == 0) return v;
  const double n = static_cast<double>(frames);
  v.mpjpe_mm = mpjpe / n;
  v.p_mpjpe_mm = p_mpjpe / n;
  v.n_mpjpe_mm = n_mpjpe / n;
  v.mpjve_mm = velocity_frames ? mpjve / static_cast<double>(velocity_frames) : 0.0;
  v.pck_percent = pck / n;
  v.auc = auc / n;
  return v;
}

void MetricAccumulator::add(const PoseSeq3D& pred, const PoseSeq3D& gt, const std::string& action) {
  all_.add(pred, gt);
  if (!action.empty()) actions_[action].add(pred, gt);
}

MetricValues MetricAccumulator::overall() const { return all_.finish(); }

std::map<std::string, MetricValues> MetricAccumulator::per_action() const {
  std::map<std::string, MetricValues> out;
  for (const auto& [k, v] : actions_) out[k] = v.finish();
  return out;
}

namespace {

void write_values(KeyValueDoc& doc, const std::string& prefix, const MetricValues& v) {
  doc.set_value(prefix + "mpjpe_mm", v.mpjpe_mm);
  doc.set_value(prefix + "p_mpjpe_mm", v.p_mpjpe_mm);
  doc.set_value(prefix + "n_mpjpe_mm", v.n_mpjpe_mm);
  doc.set_value(prefix + "mpjve_mm", v.mpjve_mm);
  doc.set_value(prefix + "pck_percent", v.pck_percent);
  doc.set_value(prefix + "auc", v.auc);
  doc.set_value(prefix + "frames", v.frames);
  doc.set_value(prefix + "degenerate_frames", v.degenerate_frames);
}

}  // namespace

KeyValueDoc MetricReport::to_doc() const {
  KeyValueDoc doc;
  write_values(doc, "metric.", overall);
  for (const auto& [action, v] : per_action) write_values(doc, "action." + action + ".", v);
  for (const auto& [k, v] : info) doc.set("info." + k, v);
  return doc;
}

std::string MetricReport::action_table() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %10s %10s %10s %10s %8s %7s\n", "action", "MPJPE", "P-MPJPE",
                "N-MPJPE", "MPJVE", "PCK", "AUC");
  os << line;
  auto row = [&](const std::string& name, const MetricValues& v) {
    std::snprintf(line, sizeof line, "%-20s %10.2f %10.2f %10.2f %10.3f %8.2f %7.4f\n", name.c_str(),
                  v.mpjpe_mm, v.p_mpjpe_mm, v.n_mpjpe_mm, v.mpjve_mm, v.pck_percent, v.auc);
    os << line;
  };
  for (const auto& [action, v] : per_action) row(action, v);
  row("average", overall);
  return os.str();
}

namespace ad {

namespace {

// Mean Euclidean norm of the 3-vectors along the last axis.
Tensor mean_norm(const Tensor& x) {
  require(x.dim(-1) == 3 && x.size() > 0, "mean_norm expects (..., 3), got " + shape_str(x.shape()));
  const std::size_t rows = x.size() / 3;
  const auto& v = x.values();
  std::vector<double> norms(rows);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    norms[r] = std::sqrt(v[3 * r] * v[3 * r] + v[3 * r + 1] * v[3 * r + 1] + v[3 * r + 2] * v[3 * r + 2]);
    total += norms[r];
  }
  flops::add(6 * rows);
  return make_op({}, {total / static_cast<double>(rows)}, {x}, [rows, norms = std::move(norms)](Node& out) {
    auto& in = *out.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    const double s = out.grad[0] / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      if (norms[r] == 0.0) continue;
      for (int c = 0; c < 3; ++c) g[3 * r + c] += s * in.value[3 * r + c] / norms[r];
    }
  });
}

// Per-(b, f) optimal scale of pred towards gt, applied to pred.
Tensor scale_align(const Tensor& pred, const Tensor& gt) {
  const std::size_t group = pred.dim(2) * 3;
  const std::size_t groups = pred.size() / group;
  const auto& p = pred.values();
  const auto& t = gt.values();
  std::vector<double> scales(groups), pp(groups), pg(groups), value(p.size());
  for (std::size_t k = 0; k < groups; ++k) {
    for (std::size_t i = k * group; i < (k + 1) * group; ++i) {
      pg[k] += p[i] * t[i];
      pp[k] += p[i] * p[i];
    }
    scales[k] = pp[k] > 0.0 ? pg[k] / pp[k] : 1.0;
    for (std::size_t i = k * group; i < (k + 1) * group; ++i) value[i] = scales[k] * p[i];
  }
  return make_op(pred.shape(), std::move(value), {pred},
                 [group, groups, scales, pp, pg, t = t](Node& out) {
                   auto& in = *out.inputs[0];
                   if (!in.requires_grad) return;
                   auto& g = in.grad_buffer();
                   const auto& p = in.value;
                   for (std::size_t k = 0; k < groups; ++k) {
                     const std::size_t lo = k * group, hi = lo + group;
                     double gp = 0.0;
                     for (std::size_t i = lo; i < hi; ++i) gp += out.grad[i] * p[i];
                     for (std::size_t i = lo; i < hi; ++i) {
                       g[i] += scales[k] * out.grad[i];
                       if (pp[k] > 0.0)
                         g[i] += gp * (t[i] / pp[k] - 2.0 * pg[k] * p[i] / (pp[k] * pp[k]));
                     }
                   }
                 });
}

// (b, f, ...) -> (b, f - 1, ...) first difference along frames.
Tensor frame_diff(const Tensor& x) {
  require(x.rank() == 4 && x.dim(1) >= 2, "frame differences need (b, f >= 2, j, 3)");
  const std::size_t b = x.dim(0), f = x.dim(1), row = x.dim(2) * x.dim(3);
  const auto& v = x.values();
  std::vector<double> out((f - 1) * b * row);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k + 1 < f; ++k)
      for (std::size_t r = 0; r < row; ++r)
        out[(i * (f - 1) + k) * row + r] = v[(i * f + k + 1) * row + r] - v[(i * f + k) * row + r];
  return make_op({b, f - 1, x.dim(2), x.dim(3)}, std::move(out), {x}, [b, f, row](Node& o) {
    auto& in = *o.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t k = 0; k + 1 < f; ++k)
        for (std::size_t r = 0; r < row; ++r) {
          const double d = o.grad[(i * (f - 1) + k) * row + r];
          g[(i * f + k + 1) * row + r] += d;
          g[(i * f + k) * row + r] -= d;
        }
  });
}

void check_loss_pair(const Tensor& pred, const Tensor& gt) {
  require(pred.rank() == 4 && pred.dim(3) == 3 && pred.shape() == gt.shape(),
          "pose losses expect matching (b, f, j, 3), got " + shape_str(pred.shape()) + " and " +
              shape_str(gt.shape()));
}

}  // namespace

Tensor mpjpe_loss(const Tensor& pred, const Tensor& gt) {
  check_loss_pair(pred, gt);
  return mean_norm(sub(pred, gt));
}

Tensor n_mpjpe_loss(const Tensor& pred, const Tensor& gt) {
  check_loss_pair(pred, gt);
  return mean_norm(sub(scale_align(pred, gt), gt));
}

Tensor mpjve_loss(const Tensor& pred, const Tensor& gt) {
  check_loss_pair(pred, gt);
  return mean_norm(frame_diff(sub(pred, gt)));
}

Tensor stage2_loss(const Tensor& pred, const Tensor& gt) {
  return add(add(mpjpe_loss(pred, gt), scale(n_mpjpe_loss(pred, gt), 0.5)),
             scale(mpjve_loss(pred, gt), 20.0));
}

}  // namespace ad

}  // namespace poselift
