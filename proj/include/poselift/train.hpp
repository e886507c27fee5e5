#pragma once

// Two-stage training, evaluation and inference drivers.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "poselift/bone_aware.hpp"
#include "poselift/dataset.hpp"
#include "poselift/kv.hpp"
#include "poselift/metrics.hpp"
#include "poselift/pipeline.hpp"

namespace poselift {

struct TrainSchedule {
  int stage = 1;
  std::size_t epochs = 60;
  std::size_t batch = 128;
  double lr = 2e-3;
  double lr_decay = 0.99;  // per epoch
  double weight_decay = 0.01;
  double dropout = 0.1;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;        // 0: no cap
  double target_accuracy = 0.0;     // stage 1: stop once held-out accuracy exceeds it (0: off)
  double target_fraction = 0.0;     // stage 2: stop once training MPJPE < fraction * initial (0: off)
  bool deterministic = true;

  static TrainSchedule stage1_defaults();
  static TrainSchedule stage2_defaults();
  // Reads "stage1.*" or "stage2.*" keys on top of the stage defaults.
  static TrainSchedule from_doc(const KeyValueDoc& doc, int stage);
  void write(KeyValueDoc& doc) const;
  void validate() const;

  double lr_at(std::size_t epoch) const;
};

// Decoupled weight decay with bias-corrected moments.
class AdamW {
 public:
  AdamW(ParamSet& params, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(double lr);
  std::size_t steps() const { return t_; }

 private:
  std::vector<ad::Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

// Rescales gradients so their global L2 norm is at most `max_norm`; returns
// the norm before clipping.
double clip_grad_norm(ParamSet& params, double max_norm);

struct Clip {
  const Sequence* sequence;
  std::size_t start;
};
// Non-overlapping windows of `frames`; a remainder is covered by one extra
// window aligned to the sequence end. Sequences shorter than `frames` are
// skipped.
std::vector<Clip> make_clips(const std::vector<const Sequence*>& seqs, std::size_t frames);
PoseSeq2D clip_2d(const Clip& c, std::size_t frames);
PoseSeq3D clip_3d(const Clip& c, std::size_t frames);

struct EpochLog {
  std::size_t epoch;
  double lr;
  double loss;
  double train_metric;  // stage 1: accuracy; stage 2: MPJPE (mm)
  double val_metric;
};
using EpochCallback = std::function<void(const EpochLog&)>;

struct Stage1Result {
  double first_batch_loss = 0.0;
  double final_loss = 0.0;
  double val_accuracy = 0.0;
  std::size_t steps = 0;
  std::vector<EpochLog> epochs;
};

// Fraction of non-root bones whose predicted bin matches the ground truth.
double bone_accuracy(BoneAwareModule& model, const std::vector<Clip>& clips, std::size_t frames,
                     std::size_t batch);

Stage1Result train_stage1(BoneAwareModule& model, const Dataset& data, const TrainSchedule& sched,
                          const EpochCallback& on_epoch = {});

struct Stage2Result {
  double initial_mpjpe = 0.0;  // training set before any update (evaluation mode)
  double final_mpjpe = 0.0;    // training set after the last update (evaluation mode)
  double final_loss = 0.0;
  std::size_t steps = 0;
  std::vector<double> step_mpjpe;
  std::vector<EpochLog> epochs;
};

// `frozen` is never updated. Bone features are computed once per clip.
Stage2Result train_stage2(BoneAwareModule& frozen, PoseLifter& lifter, const Dataset& data,
                          const TrainSchedule& sched, const EpochCallback& on_epoch = {});

// Full-sequence prediction (root-relative mm). Sequences are cut into model
// windows; shorter ones are edge-padded.
PoseSeq3D predict_sequence(BoneAwareModule& frozen, PoseLifter& lifter, const PoseSeq2D& s2d);

MetricReport evaluate(BoneAwareModule& frozen, PoseLifter& lifter, const std::vector<const Sequence*>& seqs);

}  // namespace poselift
