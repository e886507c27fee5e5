#pragma once

// Pose-sequence datasets: in-memory form, on-disk container (directory with
// manifest.json, topology.txt and arrays.bin), and ingestion of externally
// preprocessed arrays.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "poselift/archive.hpp"
#include "poselift/skeleton.hpp"

namespace poselift {

inline constexpr const char* kDatasetSchema = "poselift.dataset/1";
inline constexpr const char* kExternalSchema = "poselift.external/1";

enum class Split { train, val };

struct Sequence {
  std::string name;
  std::string action;  // optional tag
  Split split = Split::train;
  PoseSeq3D pose3d;  // root-relative mm
  PoseSeq2D pose2d;  // units per manifest
};

struct DatasetManifest {
  std::string schema = kDatasetSchema;
  std::string topology_hash;
  std::string units_3d = "mm";
  std::string units_2d = "mm";
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  std::uint64_t seed = 0;
  std::string source = "synthetic";
};

struct Dataset {
  DatasetManifest manifest;
  SkeletonTopology topology;
  std::vector<Sequence> sequences;

  std::vector<const Sequence*> split(Split s) const;
  // Recomputes manifest split sizes and topology hash from the contents.
  void refresh_manifest();
};

// Seeded 80/20 assignment by sequence.
void assign_splits(Dataset& ds, std::uint64_t seed, double train_fraction = 0.8);

struct SaveOptions {
  DType dtype = DType::f32;
};
void save_dataset(const Dataset& ds, const std::filesystem::path& dir, SaveOptions opt = {});
// Validates schema and topology hash; `expected` additionally pins the
// topology the caller was configured with.
Dataset load_dataset(const std::filesystem::path& dir, const SkeletonTopology* expected = nullptr);

// External arrays: a named-array archive holding "<seq>/pose2d" (f, j, 2) and
// "<seq>/pose3d" (f, j, 3), described by a JSON manifest:
//   {"schema": "poselift.external/1", "units_2d": "mm"|"m", "units_3d": "mm"|"m",
//    "sequences": [{"name": ..., "action": ..., "split": "train"|"val"}]}
// Values are converted to mm and 3-D poses re-rooted.
Dataset ingest_external(const std::filesystem::path& archive, const std::filesystem::path& manifest,
                        const SkeletonTopology& topo);

// Multiplier converting a declared length unit to millimetres.
double unit_to_mm(const std::string& unit);

}  // namespace poselift
