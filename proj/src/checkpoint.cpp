#include "poselift/checkpoint.hpp"

namespace poselift {

namespace {

void write_common(ArrayArchive& ar, const char* kind, const ModelConfig& cfg, const SkeletonTopology& topo) {
  KeyValueDoc doc;
  cfg.write(doc);
  ar.metadata()["kind"] = kind;
  ar.metadata()["config"] = doc.serialize();
  ar.metadata()["topology"] = topo.serialize();
  ar.metadata()["topology_hash"] = topo.hash();
  ar.metadata()["units"] = "mm";
}

struct Common {
  ModelConfig cfg;
  SkeletonTopology topo;
};

Common read_common(const ArrayArchive& ar, const char* kind, const std::string& source) {
  const auto& md = ar.metadata();
  if (!md.contains("kind") || md["kind"] != kind)
    throw ConfigError(source + ": not a " + std::string(kind) + " checkpoint (kind " +
                      (md.contains("kind") ? md["kind"].dump() : std::string("missing")) + ")");
  try {
    Common c;
    c.cfg = ModelConfig::from_doc(KeyValueDoc::parse(md.at("config").get<std::string>(), source));
    c.topo = SkeletonTopology::parse(md.at("topology").get<std::string>(), source);
    if (c.topo.hash() != md.at("topology_hash").get<std::string>())
      throw ConfigError(source + ": stored topology does not match its recorded hash");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

}  // namespace

void save_stage1(const std::filesystem::path& path, BoneAwareModule& model) {
  ArrayArchive ar;
  write_common(ar, kStage1Kind, model.config(), model.topology());
  auto params = model.params();
  store_params(ar, params);
  ar.save(path);
}

std::unique_ptr<BoneAwareModule> load_stage1(const std::filesystem::path& path) {
  const auto ar = ArrayArchive::load(path);
  const auto c = read_common(ar, kStage1Kind, path.string());
  auto model = std::make_unique<BoneAwareModule>(c.cfg, c.topo);
  auto params = model->params();
  restore_params(ar, params);
  return model;
}

void save_stage2(const std::filesystem::path& path, PoseLifter& lifter, const std::string& stage1_digest) {
  ArrayArchive ar;
  write_common(ar, kStage2Kind, lifter.config(), lifter.topology());
  ar.metadata()["stage1_digest"] = stage1_digest;
  auto params = lifter.params();
  store_params(ar, params);
  ar.save(path);
}

std::string stage2_parent_digest(const std::filesystem::path& path) {
  const auto ar = ArrayArchive::load(path);
  read_common(ar, kStage2Kind, path.string());
  return ar.metadata().value("stage1_digest", std::string());
}

std::unique_ptr<PoseLifter> load_stage2(const std::filesystem::path& path, const std::filesystem::path& stage1_path) {
  const auto ar = ArrayArchive::load(path);
  const auto c = read_common(ar, kStage2Kind, path.string());
  if (!stage1_path.empty()) {
    const auto want = ar.metadata().value("stage1_digest", std::string());
    const auto have = file_digest(stage1_path);
    if (want != have)
      throw ConfigError(path.string() + " was trained against stage-1 checkpoint " + want + ", but " +
                        stage1_path.string() + " has digest " + have);
  }
  auto lifter = std::make_unique<PoseLifter>(c.cfg, c.topo);
  auto params = lifter->params();
  restore_params(ar, params);
  return lifter;
}

void save_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds,
                      const ModelConfig& cfg, const SkeletonTopology& topo) {
  require(!preds.empty(), "no predictions to save");
  ArrayArchive ar;
  write_common(ar, kPredictionKind, cfg, topo);
  nlohmann::json names = nlohmann::json::array();
  bool uniform = true;
  for (const auto& p : preds) {
    names.push_back(p.name);
    uniform = uniform && p.pose.frames() == preds.front().pose.frames();
  }
  ar.metadata()["names"] = names;
  if (uniform) {
    std::vector<double> all;
    for (const auto& p : preds) all.insert(all.end(), p.pose.storage().begin(), p.pose.storage().end());
    ar.put("pose3d", {preds.size(), preds.front().pose.frames(), preds.front().pose.joints(), 3}, std::move(all));
  } else {
    for (std::size_t i = 0; i < preds.size(); ++i)
      ar.put("pose3d/" + std::to_string(i), {preds[i].pose.frames(), preds[i].pose.joints(), 3},
             preds[i].pose.storage());
  }
  ar.save(path);
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path, SkeletonTopology* topo) {
  const auto ar = ArrayArchive::load(path);
  Common c;
  try {
    c = read_common(ar, kPredictionKind, path.string());
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
  if (topo) *topo = c.topo;
  std::vector<std::string> names;
  try {
    names = ar.metadata().at("names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  std::vector<Prediction> out;
  if (ar.has("pose3d")) {
    const auto& a = ar.get("pose3d");
    if (a.shape.size() != 4 || a.shape[3] != 3 || a.shape[0] != names.size())
      throw DataError(path.string() + ": pose3d must be (b, f, j, 3), got " + ad::shape_str(a.shape));
    const std::size_t per = a.shape[1] * a.shape[2] * 3;
    for (std::size_t i = 0; i < names.size(); ++i)
      out.push_back({names[i], PoseSeq3D(a.shape[1], a.shape[2],
                                         std::vector<double>(a.values.begin() + static_cast<std::ptrdiff_t>(i * per),
                                                             a.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * per)))});
  } else {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto& a = ar.get("pose3d/" + std::to_string(i));
      if (a.shape.size() != 3 || a.shape[2] != 3) throw DataError(path.string() + ": malformed pose array");
      out.push_back({names[i], PoseSeq3D(a.shape[0], a.shape[1], a.values)});
    }
  }
  return out;
}

}  // namespace poselift
