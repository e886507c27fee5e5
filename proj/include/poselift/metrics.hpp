#pragma once

// Pose-error metrics on root-relative millimetre sequences, the stage losses,
// and their differentiable counterparts for training.

#include <map>
#include <string>
#include <vector>

#include "poselift/bone_aware.hpp"
#include "poselift/kv.hpp"
#include "poselift/skeleton.hpp"
#include "poselift/tensor.hpp"

namespace poselift {

double mpjpe(const PoseSeq3D& pred, const PoseSeq3D& gt);

struct ProcrustesResult {
  double error_mm = 0.0;
  std::size_t degenerate_frames = 0;  // frames where alignment was skipped
};
ProcrustesResult p_mpjpe_detailed(const PoseSeq3D& pred, const PoseSeq3D& gt);
double p_mpjpe(const PoseSeq3D& pred, const PoseSeq3D& gt);

double n_mpjpe(const PoseSeq3D& pred, const PoseSeq3D& gt);
double mpjve(const PoseSeq3D& pred, const PoseSeq3D& gt);
double pck(const PoseSeq3D& pred, const PoseSeq3D& gt, double threshold_mm = 150.0);
double auc(const PoseSeq3D& pred, const PoseSeq3D& gt);
// 5, 10, ..., 150 mm
std::vector<double> auc_thresholds();

double stage2_loss(const PoseSeq3D& pred, const PoseSeq3D& gt);
double stage1_loss(const CategoryProbabilities& probs, const PolarCategories& labels);

// Removes the root joint position from every frame.
PoseSeq3D reroot(const PoseSeq3D& pose, const SkeletonTopology& topo);

struct MetricValues {
  double mpjpe_mm = 0.0;
  double p_mpjpe_mm = 0.0;
  double n_mpjpe_mm = 0.0;
  double mpjve_mm = 0.0;
  double pck_percent = 0.0;
  double auc = 0.0;
  std::size_t frames = 0;
  std::size_t degenerate_frames = 0;
};

// Accumulates frame-weighted metrics over many sequences.
class MetricAccumulator {
 public:
  void add(const PoseSeq3D& pred, const PoseSeq3D& gt, const std::string& action = "");
  MetricValues overall() const;
  std::map<std::string, MetricValues> per_action() const;

 private:
  struct Sums {
    double mpjpe = 0, p_mpjpe = 0, n_mpjpe = 0, mpjve = 0, pck = 0, auc = 0;
    std::size_t frames = 0, velocity_frames = 0, degenerate = 0;
    void add(const PoseSeq3D& pred, const PoseSeq3D& gt);
    MetricValues finish() const;
  };
  Sums all_;
  std::map<std::string, Sums> actions_;
};

struct MetricReport {
  MetricValues overall;
  std::map<std::string, MetricValues> per_action;
  std::map<std::string, std::string> info;  // checkpoint, dataset, split...

  // Stable keys: "metric.<name>", "action.<tag>.<name>", "info.<key>".
  KeyValueDoc to_doc() const;
  std::string serialize() const { return to_doc().serialize(); }
  // Fixed-width per-action table.
  std::string action_table() const;
};

namespace ad {

// Differentiable losses on (b, f, j, 3) millimetres; `gt` is a constant.
Tensor mpjpe_loss(const Tensor& pred, const Tensor& gt);
Tensor n_mpjpe_loss(const Tensor& pred, const Tensor& gt);
Tensor mpjve_loss(const Tensor& pred, const Tensor& gt);
Tensor stage2_loss(const Tensor& pred, const Tensor& gt);

}  // namespace ad

}  // namespace poselift
