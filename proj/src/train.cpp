#include "poselift/train.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "poselift/ops.hpp"

namespace poselift {

namespace {

void shuffle(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
}

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericError(what + " is not finite (" + std::to_string(v) + ")");
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch, std::mt19937_64* rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (rng) shuffle(idx, *rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch)
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                     idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
  return out;
}

TrainSchedule read_schedule(const KeyValueDoc& doc, TrainSchedule s, const std::string& p) {
  s.epochs = static_cast<std::size_t>(doc.get_int(p + "epochs", static_cast<long long>(s.epochs)));
  s.batch = static_cast<std::size_t>(doc.get_int(p + "batch", static_cast<long long>(s.batch)));
  s.lr = doc.get_double(p + "lr", s.lr);
  s.lr_decay = doc.get_double(p + "lr_decay", s.lr_decay);
  s.weight_decay = doc.get_double(p + "weight_decay", s.weight_decay);
  s.dropout = doc.get_double(p + "dropout", s.dropout);
  s.clip_norm = doc.get_double(p + "clip_norm", s.clip_norm);
  s.seed = static_cast<std::uint64_t>(doc.get_int(p + "seed", static_cast<long long>(s.seed)));
  s.max_steps = static_cast<std::size_t>(doc.get_int(p + "max_steps", static_cast<long long>(s.max_steps)));
  s.target_accuracy = doc.get_double(p + "target_accuracy", s.target_accuracy);
  s.target_fraction = doc.get_double(p + "target_fraction", s.target_fraction);
  s.deterministic = doc.get_bool(p + "deterministic", s.deterministic);
  return s;
}

}  // namespace

TrainSchedule TrainSchedule::stage1_defaults() { return TrainSchedule{}; }

TrainSchedule TrainSchedule::stage2_defaults() {
  TrainSchedule s;
  s.stage = 2;
  s.epochs = 120;
  s.batch = 16;
  s.lr = 5e-4;
  return s;
}

TrainSchedule TrainSchedule::from_doc(const KeyValueDoc& doc, int stage) {
  require(stage == 1 || stage == 2, "training stage must be 1 or 2");
  auto s = read_schedule(doc, stage == 1 ? stage1_defaults() : stage2_defaults(),
                         stage == 1 ? "stage1." : "stage2.");
  s.validate();
  return s;
}

void TrainSchedule::write(KeyValueDoc& doc) const {
  const std::string p = stage == 1 ? "stage1." : "stage2.";
  doc.set_value(p + "epochs", epochs);
  doc.set_value(p + "batch", batch);
  doc.set_value(p + "lr", lr);
  doc.set_value(p + "lr_decay", lr_decay);
  doc.set_value(p + "weight_decay", weight_decay);
  doc.set_value(p + "dropout", dropout);
  doc.set_value(p + "clip_norm", clip_norm);
  doc.set_value(p + "seed", static_cast<long long>(seed));
  doc.set_value(p + "max_steps", max_steps);
  doc.set_value(p + "target_accuracy", target_accuracy);
  doc.set_value(p + "target_fraction", target_fraction);
  doc.set_value(p + "deterministic", deterministic);
}

void TrainSchedule::validate() const {
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr decay must lie in (0, 1]");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
  if (target_accuracy < 0.0 || target_accuracy >= 1.0) throw ConfigError("target accuracy must lie in [0, 1)");
  if (target_fraction < 0.0 || target_fraction >= 1.0) throw ConfigError("target fraction must lie in [0, 1)");
}

double TrainSchedule::lr_at(std::size_t epoch) const {
  return lr * std::pow(lr_decay, static_cast<double>(epoch));
}

AdamW::AdamW(ParamSet& params, double weight_decay, double beta1, double beta2, double eps)
    : wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  for (auto& [name, t] : params.params) {
    params_.push_back(t);
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.requires_grad()) continue;
    auto w = p.mutable_data();
    const auto g = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
      v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
      w[i] -= lr * wd_ * w[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double clip_grad_norm(ParamSet& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, t] : params.params)
    for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  check_finite(norm, "gradient norm");
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [name, t] : params.params)
      for (double& g : t.grad_storage()) g *= s;
  }
  return norm;
}

std::vector<Clip> make_clips(const std::vector<const Sequence*>& seqs, std::size_t frames) {
  require(frames > 0, "clip length must be positive");
  std::vector<Clip> out;
  for (const auto* s : seqs) {
    const std::size_t n = s->pose2d.frames();
    if (n < frames) continue;
    std::size_t start = 0;
    for (; start + frames <= n; start += frames) out.push_back({s, start});
    if (start < n) out.push_back({s, n - frames});
  }
  return out;
}

PoseSeq2D clip_2d(const Clip& c, std::size_t frames) {
  const auto& src = c.sequence->pose2d;
  const std::size_t row = src.joints() * 2;
  std::vector<double> v(src.storage().begin() + static_cast<std::ptrdiff_t>(c.start * row),
                        src.storage().begin() + static_cast<std::ptrdiff_t>((c.start + frames) * row));
  return PoseSeq2D(frames, src.joints(), std::move(v));
}

PoseSeq3D clip_3d(const Clip& c, std::size_t frames) {
  const auto& src = c.sequence->pose3d;
  const std::size_t row = src.joints() * 3;
  std::vector<double> v(src.storage().begin() + static_cast<std::ptrdiff_t>(c.start * row),
                        src.storage().begin() + static_cast<std::ptrdiff_t>((c.start + frames) * row));
  return PoseSeq3D(frames, src.joints(), std::move(v));
}

double bone_accuracy(BoneAwareModule& model, const std::vector<Clip>& clips, std::size_t frames,
                     std::size_t batch) {
  ad::NoGradGuard guard;
  const auto& topo = model.topology();
  std::size_t hits = 0, total = 0;
  for (const auto& b : batches(clips.size(), batch, nullptr)) {
    std::vector<PoseSeq2D> s2d;
    for (auto i : b) s2d.push_back(clip_2d(clips[i], frames));
    std::vector<const PoseSeq2D*> ptrs;
    for (const auto& s : s2d) ptrs.push_back(&s);
    const auto logits = model.logits(pack_poses(ptrs), RunContext{});
    for (std::size_t k = 0; k < b.size(); ++k) {
      const auto pred = classify_logits(logits, k);
      const auto gt = ground_truth_categories(clip_3d(clips[b[k]], frames), topo, model.categories());
      for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t j = 0; j < topo.num_joints(); ++j) {
          if (topo.parent(j) < 0) continue;
          ++total;
          if (pred(f, j) == gt(f, j)) ++hits;
        }
    }
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

Stage1Result train_stage1(BoneAwareModule& model, const Dataset& data, const TrainSchedule& sched,
                          const EpochCallback& on_epoch) {
  sched.validate();
  if (data.topology.hash() != model.topology().hash())
    throw ConfigError("dataset topology " + data.topology.hash() + " does not match the model's " +
                      model.topology().hash());
  const std::size_t frames = model.config().frames;
  const auto train = make_clips(data.split(Split::train), frames);
  const auto val = make_clips(data.split(Split::val), frames);
  if (train.empty())
    throw DataError("no training clips of " + std::to_string(frames) + " frames in the dataset");

  std::vector<std::vector<int>> labels;
  labels.reserve(train.size());
  for (const auto& c : train)
    labels.push_back(ground_truth_categories(clip_3d(c, frames), model.topology(), model.categories()).data);

  auto params = model.params();
  AdamW opt(params, sched.weight_decay);
  std::mt19937_64 rng(sched.seed);
  RunContext ctx{true, sched.dropout, &rng};
  Stage1Result result;
  bool first = true;
  try {
    for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
      const double lr = sched.lr_at(epoch);
      double loss_sum = 0.0;
      std::size_t loss_count = 0;
      for (const auto& b : batches(train.size(), sched.batch, &rng)) {
        std::vector<PoseSeq2D> s2d;
        std::vector<int> y;
        for (auto i : b) {
          s2d.push_back(clip_2d(train[i], frames));
          y.insert(y.end(), labels[i].begin(), labels[i].end());
        }
        std::vector<const PoseSeq2D*> ptrs;
        for (const auto& s : s2d) ptrs.push_back(&s);
        params.zero_grad();
        const auto logits = model.logits(pack_poses(ptrs), ctx);
        const auto loss = ad::cross_entropy(logits, y);
        check_finite(loss.item(), "stage-1 loss at epoch " + std::to_string(epoch + 1));
        if (first) result.first_batch_loss = loss.item();
        first = false;
        loss.backward();
        clip_grad_norm(params, sched.clip_norm);
        opt.step(lr);
        loss_sum += loss.item();
        ++loss_count;
        ++result.steps;
        if (sched.max_steps && result.steps >= sched.max_steps) break;
      }
      EpochLog log{epoch + 1, lr, loss_sum / static_cast<double>(loss_count), 0.0, 0.0};
      log.val_metric = val.empty() ? 0.0 : bone_accuracy(model, val, frames, sched.batch);
      result.final_loss = log.loss;
      result.val_accuracy = log.val_metric;
      result.epochs.push_back(log);
      if (on_epoch) on_epoch(log);
      if (sched.target_accuracy > 0.0 && log.val_metric > sched.target_accuracy) break;
      if (sched.max_steps && result.steps >= sched.max_steps) break;
    }
  } catch (const NonFiniteValue& e) {
    throw NumericError("stage-1 training diverged after " + std::to_string(result.steps) + " steps: " + e.what());
  }
  return result;
}

namespace {

struct Stage2Batchable {
  std::vector<PoseSeq2D> s2d;
  std::vector<PoseSeq3D> s3d;
  std::vector<BoneSpherical> b3d;
};

Stage2Batchable prepare(BoneAwareModule& frozen, const std::vector<Clip>& clips, std::size_t frames) {
  Stage2Batchable out;
  for (const auto& c : clips) {
    out.s2d.push_back(clip_2d(c, frames));
    out.s3d.push_back(clip_3d(c, frames));
    out.b3d.push_back(infer_bones(frozen, out.s2d.back()));
  }
  return out;
}

struct Packed {
  ad::Tensor s2d, b3d, s3d;
};

Packed pack(const Stage2Batchable& d, const std::vector<std::size_t>& idx, double coord_scale) {
  std::vector<const PoseSeq2D*> s2d;
  std::vector<const PoseSeq3D*> s3d;
  std::vector<const BoneSpherical*> b3d;
  for (auto i : idx) {
    s2d.push_back(&d.s2d[i]);
    s3d.push_back(&d.s3d[i]);
    b3d.push_back(&d.b3d[i]);
  }
  return {pack_poses(s2d), pack_bones(b3d, coord_scale), pack_poses(s3d)};
}

double eval_mpjpe(PoseLifter& lifter, const Stage2Batchable& d, std::size_t batch) {
  ad::NoGradGuard guard;
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& b : batches(d.s2d.size(), batch, nullptr)) {
    const auto p = pack(d, b, lifter.config().coord_scale);
    total += ad::mpjpe_loss(lifter.forward(p.s2d, p.b3d, RunContext{}), p.s3d).item() *
             static_cast<double>(b.size());
    n += b.size();
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace

Stage2Result train_stage2(BoneAwareModule& frozen, PoseLifter& lifter, const Dataset& data,
                          const TrainSchedule& sched, const EpochCallback& on_epoch) {
  sched.validate();
  if (frozen.topology().hash() != lifter.topology().hash())
    throw ConfigError("stage-1 topology " + frozen.topology().hash() + " does not match stage-2 topology " +
                      lifter.topology().hash());
  if (data.topology.hash() != lifter.topology().hash())
    throw ConfigError("dataset topology " + data.topology.hash() + " does not match the model's " +
                      lifter.topology().hash());
  const std::size_t frames = lifter.config().frames;
  auto frozen_params = frozen.params();
  frozen_params.set_requires_grad(false);

  const auto train = prepare(frozen, make_clips(data.split(Split::train), frames), frames);
  const auto val = prepare(frozen, make_clips(data.split(Split::val), frames), frames);
  if (train.s2d.empty())
    throw DataError("no training clips of " + std::to_string(frames) + " frames in the dataset");

  auto params = lifter.params();
  AdamW opt(params, sched.weight_decay);
  std::mt19937_64 rng(sched.seed);
  RunContext ctx{true, sched.dropout, &rng};
  Stage2Result result;
  result.initial_mpjpe = eval_mpjpe(lifter, train, sched.batch);
  try {
    for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
      const double lr = sched.lr_at(epoch);
      double loss_sum = 0.0;
      std::size_t loss_count = 0;
      for (const auto& b : batches(train.s2d.size(), sched.batch, &rng)) {
        const auto p = pack(train, b, lifter.config().coord_scale);
        params.zero_grad();
        const auto pred = lifter.forward(p.s2d, p.b3d, ctx);
        const auto e = ad::mpjpe_loss(pred, p.s3d);
        const auto loss = ad::add(ad::add(e, ad::scale(ad::n_mpjpe_loss(pred, p.s3d), 0.5)),
                                  ad::scale(ad::mpjve_loss(pred, p.s3d), 20.0));
        check_finite(loss.item(), "stage-2 loss at epoch " + std::to_string(epoch + 1));
        loss.backward();
        clip_grad_norm(params, sched.clip_norm);
        opt.step(lr);
        result.step_mpjpe.push_back(e.item());
        loss_sum += loss.item();
        ++loss_count;
        ++result.steps;
        if (sched.max_steps && result.steps >= sched.max_steps) break;
      }
      EpochLog log{epoch + 1, lr, loss_sum / static_cast<double>(loss_count), 0.0, 0.0};
      log.train_metric = result.step_mpjpe.back();
      log.val_metric = val.s2d.empty() ? 0.0 : eval_mpjpe(lifter, val, sched.batch);
      result.final_loss = log.loss;
      bool done = sched.max_steps && result.steps >= sched.max_steps;
      result.final_mpjpe = -1.0;
      if (sched.target_fraction > 0.0) {
        result.final_mpjpe = eval_mpjpe(lifter, train, sched.batch);
        log.train_metric = result.final_mpjpe;
        done = done || result.final_mpjpe < sched.target_fraction * result.initial_mpjpe;
      }
      result.epochs.push_back(log);
      if (on_epoch) on_epoch(log);
      if (done) break;
    }
  } catch (const NonFiniteValue& e) {
    throw NumericError("stage-2 training diverged after " + std::to_string(result.steps) + " steps: " + e.what());
  }
  if (result.final_mpjpe < 0.0 || result.epochs.empty()) result.final_mpjpe = eval_mpjpe(lifter, train, sched.batch);
  return result;
}

PoseSeq3D predict_sequence(BoneAwareModule& frozen, PoseLifter& lifter, const PoseSeq2D& s2d) {
  const std::size_t f = lifter.config().frames, j = s2d.joints();
  require(j == lifter.config().joints, "prediction input has " + std::to_string(j) + " joints, model expects " +
                                           std::to_string(lifter.config().joints));
  require(s2d.frames() > 0, "prediction input has no frames");
  ad::NoGradGuard guard;
  const std::size_t n = s2d.frames();
  PoseSeq2D padded = s2d;
  if (n < f) {
    std::vector<double> v(s2d.storage());
    for (std::size_t k = n; k < f; ++k)
      v.insert(v.end(), s2d.storage().end() - static_cast<std::ptrdiff_t>(2 * j), s2d.storage().end());
    padded = PoseSeq2D(f, j, std::move(v));
  }
  Sequence holder;
  holder.pose2d = padded;
  holder.pose3d = PoseSeq3D(padded.frames(), j);
  const auto clips = make_clips({&holder}, f);
  PoseSeq3D out(padded.frames(), j);
  for (const auto& b : batches(clips.size(), 16, nullptr)) {
    std::vector<PoseSeq2D> c2;
    std::vector<BoneSpherical> bones;
    for (auto i : b) {
      c2.push_back(clip_2d(clips[i], f));
      bones.push_back(infer_bones(frozen, c2.back()));
    }
    std::vector<const PoseSeq2D*> p2;
    std::vector<const BoneSpherical*> pb;
    for (std::size_t k = 0; k < b.size(); ++k) {
      p2.push_back(&c2[k]);
      pb.push_back(&bones[k]);
    }
    const auto pred = lifter.forward(pack_poses(p2), pack_bones(pb, lifter.config().coord_scale), RunContext{});
    const auto& v = pred.values();
    for (std::size_t k = 0; k < b.size(); ++k) {
      const std::size_t start = clips[b[k]].start;
      for (std::size_t t = 0; t < f; ++t)
        for (std::size_t q = 0; q < j * 3; ++q)
          out.data()[(start + t) * j * 3 + q] = v[(k * f + t) * j * 3 + q];
    }
  }
  if (n == padded.frames()) return out;
  return PoseSeq3D(n, j, std::vector<double>(out.storage().begin(),
                                             out.storage().begin() + static_cast<std::ptrdiff_t>(n * j * 3)));
}

MetricReport evaluate(BoneAwareModule& frozen, PoseLifter& lifter, const std::vector<const Sequence*>& seqs) {
  require(!seqs.empty(), "nothing to evaluate");
  MetricAccumulator acc;
  for (const auto* s : seqs) {
    const auto pred = reroot(predict_sequence(frozen, lifter, s->pose2d), lifter.topology());
    acc.add(pred, s->pose3d, s->action);
  }
  MetricReport report;
  report.overall = acc.overall();
  report.per_action = acc.per_action();
  return report;
}

}  // namespace poselift
