#include "poselift/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "poselift/error.hpp"
#include "poselift/metrics.hpp"

namespace poselift {

namespace {

std::string split_name(Split s) { return s == Split::train ? "train" : "val"; }

Split parse_split(const std::string& s, const std::string& where) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  throw DataError(where + ": unknown split '" + s + "'");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
}

void check_shape(const NamedArray& a, std::size_t channels, std::size_t joints, const std::string& what) {
  if (a.shape.size() != 3 || a.shape[2] != channels)
    throw DataError(what + " must have shape (f, j, " + std::to_string(channels) + "), got " +
                    ad::shape_str(a.shape));
  if (a.shape[1] != joints)
    throw DataError(what + " has " + std::to_string(a.shape[1]) + " joints, topology has " +
                    std::to_string(joints));
  if (a.shape[0] == 0) throw DataError(what + " has no frames");
  const auto bad = std::find_if(a.values.begin(), a.values.end(), [](double v) { return !std::isfinite(v); });
  if (bad != a.values.end())
    throw DataError(what + " holds a non-finite value at flat index " + std::to_string(bad - a.values.begin()));
}

}  // namespace

std::vector<const Sequence*> Dataset::split(Split s) const {
  std::vector<const Sequence*> out;
  for (const auto& seq : sequences)
    if (seq.split == s) out.push_back(&seq);
  return out;
}

void Dataset::refresh_manifest() {
  manifest.topology_hash = topology.hash();
  manifest.train_size = split(Split::train).size();
  manifest.val_size = split(Split::val).size();
}

void assign_splits(Dataset& ds, std::uint64_t seed, double train_fraction) {
  std::vector<std::size_t> order(ds.sequences.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ 0x5eedcafeULL);
  // Fisher-Yates by hand: std::shuffle's draw pattern is implementation-defined.
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(order.size())));
  for (std::size_t k = 0; k < order.size(); ++k)
    ds.sequences[order[k]].split = k < n_train ? Split::train : Split::val;
  ds.refresh_manifest();
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir, SaveOptions opt) {
  std::filesystem::create_directories(dir);
  ArrayArchive ar;
  nlohmann::json seqs = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const auto& s = ds.sequences[i];
    const std::string key = "seq" + std::to_string(i);
    ar.put(key + "/pose3d", {s.pose3d.frames(), s.pose3d.joints(), 3}, s.pose3d.storage(), opt.dtype);
    ar.put(key + "/pose2d", {s.pose2d.frames(), s.pose2d.joints(), 2}, s.pose2d.storage(), opt.dtype);
    seqs.push_back({{"key", key}, {"name", s.name}, {"action", s.action}, {"split", split_name(s.split)}});
  }
  ar.save(dir / "arrays.bin");

  std::ofstream topo(dir / "topology.txt");
  topo << ds.topology.serialize();
  if (!topo) throw DataError("cannot write " + (dir / "topology.txt").string());

  const auto& m = ds.manifest;
  nlohmann::json manifest = {
      {"schema", m.schema},          {"topology_hash", ds.topology.hash()},
      {"units_3d", m.units_3d},      {"units_2d", m.units_2d},
      {"train_size", ds.split(Split::train).size()},
      {"val_size", ds.split(Split::val).size()},
      {"seed", m.seed},              {"source", m.source},
      {"dtype", to_string(opt.dtype)}, {"sequences", seqs}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
}

Dataset load_dataset(const std::filesystem::path& dir, const SkeletonTopology* expected) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw DataError("no dataset at " + dir.string() + " (missing manifest.json)");
  const auto m = read_json(manifest_path);
  Dataset ds;
  try {
    ds.manifest.schema = m.at("schema").get<std::string>();
    if (ds.manifest.schema != kDatasetSchema)
      throw DataError(manifest_path.string() + ": schema '" + ds.manifest.schema + "' is not " +
                      kDatasetSchema);
    ds.manifest.topology_hash = m.at("topology_hash").get<std::string>();
    ds.manifest.units_3d = m.at("units_3d").get<std::string>();
    ds.manifest.units_2d = m.at("units_2d").get<std::string>();
    ds.manifest.train_size = m.at("train_size").get<std::size_t>();
    ds.manifest.val_size = m.at("val_size").get<std::size_t>();
    ds.manifest.seed = m.at("seed").get<std::uint64_t>();
    ds.manifest.source = m.value("source", std::string("unknown"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  if (ds.manifest.units_3d != "mm")
    throw DataError(manifest_path.string() + ": stored 3-D units must be mm, got " + ds.manifest.units_3d);

  try {
    ds.topology = SkeletonTopology::load(dir / "topology.txt");
  } catch (const ConfigError& e) {
    throw DataError(std::string("dataset topology: ") + e.what());
  }
  if (ds.topology.hash() != ds.manifest.topology_hash)
    throw DataError(manifest_path.string() + ": topology hash " + ds.manifest.topology_hash +
                    " does not match the shipped topology file (" + ds.topology.hash() + ")");
  if (expected && expected->hash() != ds.manifest.topology_hash)
    throw DataError(manifest_path.string() + ": dataset topology " + ds.manifest.topology_hash +
                    " differs from the configured topology " + expected->hash());

  const auto ar = ArrayArchive::load(dir / "arrays.bin");
  const std::size_t j = ds.topology.num_joints();
  try {
    for (const auto& s : m.at("sequences")) {
      const auto key = s.at("key").get<std::string>();
      const auto& a3 = ar.get(key + "/pose3d");
      const auto& a2 = ar.get(key + "/pose2d");
      check_shape(a3, 3, j, key + "/pose3d");
      check_shape(a2, 2, j, key + "/pose2d");
      if (a3.shape[0] != a2.shape[0]) throw DataError(key + ": 2-D and 3-D frame counts differ");
      Sequence seq;
      seq.name = s.at("name").get<std::string>();
      seq.action = s.value("action", std::string());
      seq.split = parse_split(s.at("split").get<std::string>(), manifest_path.string());
      seq.pose3d = PoseSeq3D(a3.shape[0], j, a3.values);
      seq.pose2d = PoseSeq2D(a2.shape[0], j, a2.values);
      ds.sequences.push_back(std::move(seq));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  if (ds.split(Split::train).size() != ds.manifest.train_size ||
      ds.split(Split::val).size() != ds.manifest.val_size)
    throw DataError(manifest_path.string() + ": split sizes disagree with the sequence list");
  return ds;
}

double unit_to_mm(const std::string& unit) {
  if (unit == "mm") return 1.0;
  if (unit == "m") return 1000.0;
  throw DataError("unsupported length unit '" + unit + "' (expected mm or m)");
}

Dataset ingest_external(const std::filesystem::path& archive, const std::filesystem::path& manifest,
                        const SkeletonTopology& topo) {
  const auto m = read_json(manifest);
  const auto where = manifest.string();
  Dataset ds;
  ds.topology = topo;
  ds.manifest.source = "external:" + archive.filename().string();
  double s2 = 1.0, s3 = 1.0;
  std::vector<nlohmann::json> entries;
  try {
    if (m.at("schema").get<std::string>() != kExternalSchema)
      throw DataError(where + ": schema must be " + kExternalSchema);
    s2 = unit_to_mm(m.at("units_2d").get<std::string>());
    s3 = unit_to_mm(m.at("units_3d").get<std::string>());
    for (const auto& e : m.at("sequences")) entries.push_back(e);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
  const auto ar = ArrayArchive::load(archive);
  // An archive that declares its own units must agree with the manifest.
  for (const char* key : {"units_2d", "units_3d"}) {
    if (ar.metadata().contains(key) && ar.metadata()[key] != m[key])
      throw DataError(where + ": manifest declares " + std::string(key) + " = " + m[key].dump() +
                      " but the archive says " + ar.metadata()[key].dump());
  }
  const std::size_t j = topo.num_joints();
  for (const auto& e : entries) {
    Sequence seq;
    try {
      seq.name = e.at("name").get<std::string>();
      seq.action = e.value("action", std::string());
      seq.split = parse_split(e.value("split", std::string("train")), where);
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(where + ": " + ex.what());
    }
    const auto& a3 = ar.get(seq.name + "/pose3d");
    const auto& a2 = ar.get(seq.name + "/pose2d");
    check_shape(a3, 3, j, seq.name + "/pose3d");
    check_shape(a2, 2, j, seq.name + "/pose2d");
    if (a3.shape[0] != a2.shape[0]) throw DataError(seq.name + ": 2-D and 3-D frame counts differ");
    auto v3 = a3.values;
    auto v2 = a2.values;
    for (auto& v : v3) v *= s3;
    for (auto& v : v2) v *= s2;
    seq.pose3d = reroot(PoseSeq3D(a3.shape[0], j, std::move(v3)), topo);
    seq.pose2d = PoseSeq2D(a2.shape[0], j, std::move(v2));
    ds.sequences.push_back(std::move(seq));
  }
  ds.refresh_manifest();
  return ds;
}

}  // namespace poselift
