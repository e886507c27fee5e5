// poselift: data generation, two-stage training, evaluation, inference and
// plotting from layered key-value configs.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "poselift/checkpoint.hpp"
#include "poselift/config.hpp"
#include "poselift/dataset.hpp"
#include "poselift/digest.hpp"
#include "poselift/plot.hpp"
#include "poselift/synthetic.hpp"
#include "poselift/train.hpp"

namespace fs = std::filesystem;
using namespace poselift;

namespace {

struct Common {
  std::vector<std::string> configs;
  std::vector<std::string> overrides;
  long long seed = -1;
  bool deterministic = false;
  std::string out;
};

fs::path output_root() {
  if (const char* env = std::getenv("POSELIFT_OUT"); env && *env) return env;
  return "poselift_out";
}

fs::path out_path(const Common& c, const std::string& fallback) {
  return c.out.empty() ? output_root() / fallback : fs::path(c.out);
}

// Layers: built-in defaults, then each --config file in order, then --set
// overrides, then --seed.
KeyValueDoc layered(const Common& c) {
  KeyValueDoc doc;
  for (const auto& path : c.configs) doc.merge(KeyValueDoc::load(path));
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    doc.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed >= 0)
    for (const char* key : {"model.seed", "stage1.seed", "stage2.seed", "data.seed"}) doc.set_value(key, c.seed);
  return doc;
}

SkeletonTopology topology_from(const KeyValueDoc& doc) {
  const auto path = doc.get_string("topology.file", "");
  return path.empty() ? SkeletonTopology::human36m() : SkeletonTopology::load(path);
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.configs, "Key-value config file (repeatable, later files win)");
  app->add_option("--set", c.overrides, "Override one config key, key=value (repeatable)");
  app->add_option("--seed", c.seed, "Seed for model init, batching and data generation");
  app->add_flag("--deterministic", c.deterministic, "Bit-reproducible execution");
  app->add_option("--out", c.out, "Output path (default under $POSELIFT_OUT)");
}

void log_epoch(const char* stage, const char* metric, const EpochLog& e) {
  std::cout << stage << " epoch " << e.epoch << " lr " << e.lr << " loss " << e.loss;
  if (e.train_metric != 0.0) std::cout << " train_" << metric << " " << e.train_metric;
  std::cout << " val_" << metric << " " << e.val_metric << std::endl;
}

int cmd_generate(const Common& c) {
  const auto doc = layered(c);
  SyntheticSpec spec;
  spec.topology = topology_from(doc);
  spec.num_sequences = static_cast<std::size_t>(doc.get_int("data.num_sequences", static_cast<long long>(spec.num_sequences)));
  spec.frames = static_cast<std::size_t>(doc.get_int("data.frames", static_cast<long long>(spec.frames)));
  spec.cutoff = doc.get_double("data.cutoff", spec.cutoff);
  spec.amplitude = doc.get_double("data.amplitude", spec.amplitude);
  spec.noise_sigma = doc.get_double("data.noise_sigma", spec.noise_sigma);
  spec.camera_depth = doc.get_double("data.camera_depth", spec.camera_depth);
  spec.view_yaw = doc.get_double("data.view_yaw", spec.view_yaw);
  spec.yaw_jitter = doc.get_double("data.yaw_jitter", spec.yaw_jitter);
  spec.seed = static_cast<std::uint64_t>(doc.get_int("data.seed", 0));
  if (doc.has("data.bone_lengths")) spec.bone_lengths = doc.get_double_list("data.bone_lengths");
  const auto ds = generate_synthetic(spec);
  SaveOptions opt;
  opt.dtype = doc.get_bool("data.f64", false) ? DType::f64 : DType::f32;
  const auto dir = out_path(c, "dataset");
  save_dataset(ds, dir, opt);
  load_dataset(dir, &spec.topology);  // the written container must validate
  std::cout << "wrote " << ds.sequences.size() << " sequences (" << ds.manifest.train_size << " train, "
            << ds.manifest.val_size << " val) to " << dir.string() << std::endl;
  return 0;
}

void write_manifest(const fs::path& ckpt, KeyValueDoc doc) {
  doc.set("checkpoint.file", ckpt.filename().string());
  doc.set("checkpoint.sha256", file_digest(ckpt));
  doc.save(fs::path(ckpt.string() + ".manifest"));
}

int cmd_train1(const Common& c, const std::string& data_dir) {
  const auto doc = layered(c);
  const auto topo = topology_from(doc);
  const auto cfg = ModelConfig::from_doc(doc);
  auto sched = TrainSchedule::from_doc(doc, 1);
  sched.deterministic = sched.deterministic || c.deterministic;
  const auto data = load_dataset(data_dir, &topo);
  BoneAwareModule model(cfg, topo);
  const auto result = train_stage1(model, data, sched, [](const EpochLog& e) { log_epoch("stage1", "accuracy", e); });
  const auto ckpt = out_path(c, "stage1.ckpt");
  save_stage1(ckpt, model);
  KeyValueDoc m;
  cfg.write(m);
  sched.write(m);
  m.set("data.dir", data_dir);
  m.set_value("result.first_batch_loss", result.first_batch_loss);
  m.set_value("result.final_loss", result.final_loss);
  m.set_value("result.val_accuracy", result.val_accuracy);
  m.set_value("result.steps", result.steps);
  write_manifest(ckpt, m);
  std::cout << "stage1 val_accuracy " << result.val_accuracy << " checkpoint " << ckpt.string() << std::endl;
  return 0;
}

int cmd_train2(const Common& c, const std::string& data_dir, const std::string& stage1) {
  const auto doc = layered(c);
  const auto topo = topology_from(doc);
  const auto cfg = ModelConfig::from_doc(doc);
  auto sched = TrainSchedule::from_doc(doc, 2);
  sched.deterministic = sched.deterministic || c.deterministic;
  const auto data = load_dataset(data_dir, &topo);
  const auto stage1_digest = file_digest(stage1);
  auto frozen = load_stage1(stage1);
  if (frozen->topology().hash() != topo.hash())
    throw ConfigError("stage-1 checkpoint topology " + frozen->topology().hash() + " does not match " + topo.hash());
  auto frozen_params = frozen->params();
  const auto before = params_digest(frozen_params);
  PoseLifter lifter(cfg, topo);
  const auto result =
      train_stage2(*frozen, lifter, data, sched, [](const EpochLog& e) { log_epoch("stage2", "mpjpe", e); });
  if (params_digest(frozen_params) != before || file_digest(stage1) != stage1_digest)
    throw NumericError("stage-1 weights changed during stage-2 training");
  const auto ckpt = out_path(c, "stage2.ckpt");
  save_stage2(ckpt, lifter, stage1_digest);
  KeyValueDoc m;
  cfg.write(m);
  sched.write(m);
  m.set("data.dir", data_dir);
  m.set("stage1.file", stage1);
  m.set("stage1.sha256", stage1_digest);
  m.set_value("result.initial_mpjpe", result.initial_mpjpe);
  m.set_value("result.final_mpjpe", result.final_mpjpe);
  m.set_value("result.final_loss", result.final_loss);
  m.set_value("result.steps", result.steps);
  write_manifest(ckpt, m);
  std::cout << "stage2 train_mpjpe " << result.final_mpjpe << " checkpoint " << ckpt.string() << std::endl;
  return 0;
}

std::vector<const Sequence*> pick_split(const Dataset& ds, const std::string& split) {
  if (split == "all") {
    std::vector<const Sequence*> out;
    for (const auto& s : ds.sequences) out.push_back(&s);
    return out;
  }
  if (split == "train") return ds.split(Split::train);
  if (split == "val") return ds.split(Split::val);
  throw ConfigError("--split must be train, val or all, got '" + split + "'");
}

void emit_report(const MetricReport& report, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  report.to_doc().save(path);
  if (!report.per_action.empty()) {
    std::ofstream table(path.string() + ".actions");
    table << report.action_table();
  }
  std::cout << report.serialize();
}

struct EvalArgs {
  std::string stage1, stage2, data, split = "val", predictions, reference;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
  MetricReport report;
  if (!a.predictions.empty()) {
    // Prediction file against a dataset split or another prediction file.
    SkeletonTopology topo;
    const auto preds = load_predictions(a.predictions, &topo);
    std::vector<PoseSeq3D> refs;
    std::vector<std::string> actions;
    if (!a.reference.empty()) {
      for (auto& p : load_predictions(a.reference)) refs.push_back(reroot(p.pose, topo));
      actions.assign(refs.size(), "");
    } else {
      if (a.data.empty()) throw ConfigError("eval --predictions needs --data or --reference");
      const auto ds = load_dataset(a.data, &topo);
      for (const auto* s : pick_split(ds, a.split)) {
        refs.push_back(s->pose3d);
        actions.push_back(s->action);
      }
    }
    if (refs.size() != preds.size())
      throw DataError("prediction file holds " + std::to_string(preds.size()) + " sequences, reference has " +
                      std::to_string(refs.size()));
    MetricAccumulator acc;
    for (std::size_t i = 0; i < preds.size(); ++i) acc.add(reroot(preds[i].pose, topo), refs[i], actions[i]);
    report.overall = acc.overall();
    report.per_action = acc.per_action();
    report.info["predictions"] = a.predictions;
  } else {
    if (a.stage1.empty() || a.stage2.empty() || a.data.empty())
      throw ConfigError("eval needs --stage1, --stage2 and --data (or --predictions)");
    auto frozen = load_stage1(a.stage1);
    auto lifter = load_stage2(a.stage2, a.stage1);
    const auto ds = load_dataset(a.data, &lifter->topology());
    report = evaluate(*frozen, *lifter, pick_split(ds, a.split));
    report.info["stage2"] = a.stage2;
    report.info["data"] = a.data;
  }
  report.info["split"] = a.split;
  emit_report(report, out_path(c, "report.txt"));
  return 0;
}

// 2-D input: a dataset directory (every sequence) or an archive with
// "pose2d" shaped (f, j, 2) or (b, f, j, 2).
std::vector<std::pair<std::string, PoseSeq2D>> read_inputs(const std::string& input) {
  std::vector<std::pair<std::string, PoseSeq2D>> out;
  if (fs::is_directory(input)) {
    for (const auto& s : load_dataset(input).sequences) out.emplace_back(s.name, s.pose2d);
    return out;
  }
  const auto ar = ArrayArchive::load(input);
  const auto& a = ar.get("pose2d");
  if (a.shape.size() == 3 && a.shape[2] == 2) {
    out.emplace_back("seq0", PoseSeq2D(a.shape[0], a.shape[1], a.values));
  } else if (a.shape.size() == 4 && a.shape[3] == 2) {
    const std::size_t per = a.shape[1] * a.shape[2] * 2;
    for (std::size_t i = 0; i < a.shape[0]; ++i)
      out.emplace_back("seq" + std::to_string(i),
                       PoseSeq2D(a.shape[1], a.shape[2],
                                 std::vector<double>(a.values.begin() + static_cast<std::ptrdiff_t>(i * per),
                                                     a.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * per))));
  } else {
    throw DataError(input + ": pose2d must be (f, j, 2) or (b, f, j, 2), got " + ad::shape_str(a.shape));
  }
  const double scale = unit_to_mm(ar.metadata().value("units_2d", std::string("mm")));
  for (auto& [name, s] : out)
    for (auto& v : s.data()) v *= scale;
  return out;
}

int cmd_infer(const Common& c, const std::string& stage1, const std::string& stage2, const std::string& input) {
  auto frozen = load_stage1(stage1);
  auto lifter = load_stage2(stage2, stage1);
  std::vector<Prediction> preds;
  for (auto& [name, s2d] : read_inputs(input)) {
    if (s2d.joints() != lifter->config().joints)
      throw DataError(input + ": " + name + " has " + std::to_string(s2d.joints()) + " joints, model expects " +
                      std::to_string(lifter->config().joints));
    preds.push_back({name, reroot(predict_sequence(*frozen, *lifter, s2d), lifter->topology())});
  }
  const auto path = out_path(c, "predictions.bin");
  save_predictions(path, preds, lifter->config(), lifter->topology());
  std::cout << "wrote " << preds.size() << " predictions to " << path.string() << std::endl;
  return 0;
}

int cmd_plot(const Common& c, const std::string& predictions, const std::string& data, std::size_t index,
             std::size_t stride) {
  SkeletonTopology topo;
  const auto preds = load_predictions(predictions, &topo);
  if (index >= preds.size())
    throw ConfigError("--index " + std::to_string(index) + " out of range (" + std::to_string(preds.size()) + " sequences)");
  std::optional<PoseSeq3D> gt;
  if (!data.empty()) {
    const auto ds = load_dataset(data, &topo);
    for (const auto& s : ds.sequences)
      if (s.name == preds[index].name) gt = s.pose3d;
    if (!gt) throw DataError(data + " has no sequence named " + preds[index].name);
  }
  const auto dir = out_path(c, "plots");
  const auto files = plot_sequence(preds[index].pose, gt ? &*gt : nullptr, topo, dir, preds[index].name, stride);
  std::cout << "wrote " << files.size() << " images to " << dir.string() << std::endl;
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::contract:
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numeric: return 4;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage 2-D to 3-D pose lifting"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("generate-data", "Write a synthetic dataset");
  add_common(gen, common);

  std::string data_dir, stage1, stage2;
  auto* t1 = app.add_subcommand("train-stage1", "Train the bone-aware classifier");
  add_common(t1, common);
  t1->add_option("--data", data_dir, "Dataset directory")->required();

  auto* t2 = app.add_subcommand("train-stage2", "Train the lifter against a frozen stage-1 checkpoint");
  add_common(t2, common);
  t2->add_option("--data", data_dir, "Dataset directory")->required();
  t2->add_option("--stage1", stage1, "Stage-1 checkpoint")->required();

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Write a metric report");
  add_common(ev, common);
  ev->add_option("--stage1", eval_args.stage1, "Stage-1 checkpoint");
  ev->add_option("--stage2", eval_args.stage2, "Stage-2 checkpoint");
  ev->add_option("--data", eval_args.data, "Dataset directory");
  ev->add_option("--split", eval_args.split, "train, val or all")->capture_default_str();
  ev->add_option("--predictions", eval_args.predictions, "Evaluate a prediction file instead of a checkpoint");
  ev->add_option("--reference", eval_args.reference, "Prediction file used as ground truth");

  std::string input;
  auto* inf = app.add_subcommand("infer", "Lift 2-D sequences to 3-D");
  add_common(inf, common);
  inf->add_option("--stage1", stage1, "Stage-1 checkpoint")->required();
  inf->add_option("--stage2", stage2, "Stage-2 checkpoint")->required();
  inf->add_option("--input", input, "Dataset directory or 2-D archive")->required();

  std::string predictions;
  std::size_t index = 0, stride = 10;
  auto* pl = app.add_subcommand("plot", "Render skeleton images from a prediction file");
  add_common(pl, common);
  pl->add_option("--predictions", predictions, "Prediction file")->required();
  pl->add_option("--data", data_dir, "Dataset with matching ground truth");
  pl->add_option("--index", index, "Sequence index in the prediction file")->capture_default_str();
  pl->add_option("--stride", stride, "Render every n-th frame")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(common);
    if (*t1) return cmd_train1(common, data_dir);
    if (*t2) return cmd_train2(common, data_dir, stage1);
    if (*ev) return cmd_eval(common, eval_args);
    if (*inf) return cmd_infer(common, stage1, stage2, input);
    if (*pl) return cmd_plot(common, predictions, data_dir, index, stride);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}
