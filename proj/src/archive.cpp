#include "poselift/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "poselift/digest.hpp"
#include "poselift/error.hpp"

namespace poselift {

namespace {

constexpr char kMagic[8] = {'P', 'L', 'A', 'R', 'C', 'H', 'V', '1'};

static_assert(std::endian::native == std::endian::little, "archive IO assumes a little-endian host");

std::size_t width(DType t) { return t == DType::f64 ? 8 : 4; }

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

}  // namespace

std::string to_string(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i32: return "i32";
  }
  return "f64";
}

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  if (s == "i32") return DType::i32;
  throw DataError("unknown array dtype '" + s + "'");
}

void ArrayArchive::put(const std::string& name, std::vector<std::size_t> shape, std::vector<double> values,
                       DType dtype) {
  require(product(shape) == values.size(), "archive array '" + name + "' shape does not match its payload");
  arrays_[name] = NamedArray{dtype, std::move(shape), std::move(values)};
}

const NamedArray& ArrayArchive::get(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw DataError("archive has no array named '" + name + "'");
  return it->second;
}

std::vector<unsigned char> ArrayArchive::encode() const {
  nlohmann::json manifest;
  manifest["metadata"] = metadata_;
  auto& entries = manifest["arrays"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, a] : arrays_) {
    const std::size_t nbytes = a.values.size() * width(a.dtype);
    entries.push_back({{"name", name}, {"dtype", to_string(a.dtype)}, {"shape", a.shape},
                       {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string header = manifest.dump();
  std::vector<unsigned char> out(sizeof kMagic + 8 + header.size() + offset);
  unsigned char* p = out.data();
  std::memcpy(p, kMagic, sizeof kMagic);
  p += sizeof kMagic;
  const std::uint64_t len = header.size();
  std::memcpy(p, &len, 8);
  p += 8;
  std::memcpy(p, header.data(), header.size());
  p += header.size();
  for (const auto& [name, a] : arrays_) {
    for (double v : a.values) {
      switch (a.dtype) {
        case DType::f64: std::memcpy(p, &v, 8); p += 8; break;
        case DType::f32: {
          const auto f = static_cast<float>(v);
          std::memcpy(p, &f, 4);
          p += 4;
          break;
        }
        case DType::i32: {
          const auto i = static_cast<std::int32_t>(v);
          std::memcpy(p, &i, 4);
          p += 4;
          break;
        }
      }
    }
  }
  return out;
}

ArrayArchive ArrayArchive::decode(const std::vector<unsigned char>& bytes, const std::string& source) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw DataError(source + ": not a pose archive (bad magic or truncated header)");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + sizeof kMagic, 8);
  const std::size_t start = sizeof kMagic + 8;
  if (len > bytes.size() - start)
    throw DataError(source + ": truncated archive, manifest needs " + std::to_string(len) + " bytes but only " +
                    std::to_string(bytes.size() - start) + " are present");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(start + len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": malformed archive manifest: " + e.what());
  }
  const std::size_t payload = start + len;
  ArrayArchive ar;
  try {
    ar.metadata_ = manifest.value("metadata", nlohmann::json::object());
    for (const auto& e : manifest.at("arrays")) {
      NamedArray a;
      a.dtype = parse_dtype(e.at("dtype").get<std::string>());
      a.shape = e.at("shape").get<std::vector<std::size_t>>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto nbytes = e.at("nbytes").get<std::size_t>();
      const auto name = e.at("name").get<std::string>();
      const std::size_t count = product(a.shape);
      if (nbytes != count * width(a.dtype))
        throw DataError(source + ": array '" + name + "' declares " + std::to_string(nbytes) +
                        " bytes for shape of " + std::to_string(count) + " elements");
      if (payload + offset + nbytes > bytes.size())
        throw DataError(source + ": truncated archive, array '" + name + "' needs bytes up to " +
                        std::to_string(payload + offset + nbytes) + " but the file has " +
                        std::to_string(bytes.size()));
      const unsigned char* p = bytes.data() + payload + offset;
      a.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        switch (a.dtype) {
          case DType::f64: std::memcpy(&a.values[i], p + 8 * i, 8); break;
          case DType::f32: {
            float f;
            std::memcpy(&f, p + 4 * i, 4);
            a.values[i] = f;
            break;
          }
          case DType::i32: {
            std::int32_t v;
            std::memcpy(&v, p + 4 * i, 4);
            a.values[i] = v;
            break;
          }
        }
      }
      ar.arrays_[name] = std::move(a);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": malformed archive manifest: " + e.what());
  }
  return ar;
}

void ArrayArchive::save(const std::filesystem::path& path) const { write_file(path, encode()); }

ArrayArchive ArrayArchive::load(const std::filesystem::path& path) {
  return decode(read_file(path), path.string());
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

std::string file_digest(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return sha256_hex(std::span<const unsigned char>(bytes));
}

void store_params(ArrayArchive& ar, ParamSet& params) {
  for (auto& [name, t] : params.params) ar.put("param/" + name, t.shape(), t.values());
  for (auto& [name, b] : params.buffers) ar.put("buffer/" + name, {b->size()}, *b);
}

void restore_params(const ArrayArchive& ar, ParamSet& params) {
  std::size_t expected = params.params.size() + params.buffers.size();
  std::size_t stored = 0;
  for (const auto& [name, a] : ar.arrays())
    if (name.rfind("param/", 0) == 0 || name.rfind("buffer/", 0) == 0) ++stored;
  if (stored != expected)
    throw ConfigError("checkpoint holds " + std::to_string(stored) + " tensors, model expects " +
                      std::to_string(expected));
  for (auto& [name, t] : params.params) {
    if (!ar.has("param/" + name)) throw ConfigError("checkpoint lacks parameter '" + name + "'");
    const auto& a = ar.get("param/" + name);
    if (a.shape != t.shape())
      throw ConfigError("checkpoint parameter '" + name + "' has shape " + ad::shape_str(a.shape) +
                        ", model expects " + ad::shape_str(t.shape()));
    std::copy(a.values.begin(), a.values.end(), t.mutable_data().begin());
  }
  for (auto& [name, b] : params.buffers) {
    if (!ar.has("buffer/" + name)) throw ConfigError("checkpoint lacks buffer '" + name + "'");
    const auto& a = ar.get("buffer/" + name);
    if (a.values.size() != b->size())
      throw ConfigError("checkpoint buffer '" + name + "' has the wrong length");
    *b = a.values;
  }
}

std::string params_digest(ParamSet& params) {
  std::vector<unsigned char> bytes;
  auto append = [&](const std::string& name, std::span<const double> v) {
    bytes.insert(bytes.end(), name.begin(), name.end());
    bytes.push_back(0);
    const auto* p = reinterpret_cast<const unsigned char*>(v.data());
    bytes.insert(bytes.end(), p, p + v.size() * sizeof(double));
  };
  for (auto& [name, t] : params.params) append(name, t.data());
  for (auto& [name, b] : params.buffers) append(name, *b);
  return sha256_hex(std::span<const unsigned char>(bytes));
}

}  // namespace poselift
