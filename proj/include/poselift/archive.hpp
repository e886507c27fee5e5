#pragma once

// Named-array archive: magic, manifest length, JSON manifest, raw
// little-endian payload. Used for datasets, checkpoints and predictions.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "poselift/module.hpp"

namespace poselift {

enum class DType { f32, f64, i32 };
std::string to_string(DType t);
DType parse_dtype(const std::string& s);

struct NamedArray {
  DType dtype = DType::f64;
  std::vector<std::size_t> shape;
  std::vector<double> values;  // decoded; i32 payloads are exact in double
};

class ArrayArchive {
 public:
  void put(const std::string& name, std::vector<std::size_t> shape, std::vector<double> values,
           DType dtype = DType::f64);
  bool has(const std::string& name) const { return arrays_.count(name) != 0; }
  const NamedArray& get(const std::string& name) const;
  const std::map<std::string, NamedArray>& arrays() const { return arrays_; }

  nlohmann::json& metadata() { return metadata_; }
  const nlohmann::json& metadata() const { return metadata_; }

  std::vector<unsigned char> encode() const;
  static ArrayArchive decode(const std::vector<unsigned char>& bytes, const std::string& source);

  void save(const std::filesystem::path& path) const;
  static ArrayArchive load(const std::filesystem::path& path);

 private:
  std::map<std::string, NamedArray> arrays_;
  nlohmann::json metadata_ = nlohmann::json::object();
};

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);
// SHA-256 of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

// Checkpoints: every parameter as "param/<name>", every buffer as
// "buffer/<name>", in 64-bit.
void store_params(ArrayArchive& ar, ParamSet& params);
// Shapes and names must match exactly.
void restore_params(const ArrayArchive& ar, ParamSet& params);
// Digest over the parameter and buffer values in collection order.
std::string params_digest(ParamSet& params);

}  // namespace poselift
