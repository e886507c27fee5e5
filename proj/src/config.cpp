#include "poselift/config.hpp"

namespace poselift {

ModelConfig ModelConfig::tiny() { return ModelConfig{}; }

ModelConfig ModelConfig::large() {
  ModelConfig c;
  c.variant = "large";
  c.depth = 12;
  c.dim = 128;
  return c;
}

std::string to_string(GcnPlacement p) {
  switch (p) {
    case GcnPlacement::inner: return "inner";
    case GcnPlacement::sequential: return "sequential";
    case GcnPlacement::parallel: return "parallel";
  }
  return "inner";
}

GcnPlacement parse_placement(const std::string& s) {
  if (s == "inner") return GcnPlacement::inner;
  if (s == "sequential") return GcnPlacement::sequential;
  if (s == "parallel") return GcnPlacement::parallel;
  throw ConfigError("unknown GCN placement '" + s + "' (expected inner, sequential or parallel)");
}

ModelConfig ModelConfig::from_doc(const KeyValueDoc& doc) {
  const auto variant = doc.get_string("model.variant", "tiny");
  ModelConfig c;
  if (variant == "tiny") {
    c = tiny();
  } else if (variant == "large") {
    c = large();
  } else {
    c = tiny();
    c.variant = variant;
  }
  auto size = [&](const char* key, std::size_t fallback) {
    const auto v = doc.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError(std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.depth = size("model.depth", c.depth);
  c.dim = size("model.dim", c.dim);
  c.bone_dim = size("model.bone_dim", c.bone_dim);
  c.bone_depth = size("model.bone_depth", c.bone_depth);
  c.categories = static_cast<int>(doc.get_int("model.categories", c.categories));
  c.frames = size("model.frames", c.frames);
  c.joints = size("model.joints", c.joints);
  c.state = size("model.state", c.state);
  c.conv_kernel = size("model.conv_kernel", c.conv_kernel);
  c.dt_rank = size("model.dt_rank", c.dt_rank);
  c.mlp_ratio = size("model.mlp_ratio", c.mlp_ratio);
  c.dropout = doc.get_double("model.dropout", c.dropout);
  c.coord_scale = doc.get_double("model.coord_scale", c.coord_scale);
  c.bidirectional = doc.get_bool("model.bidirectional", c.bidirectional);
  c.projection_bias = doc.get_bool("model.projection_bias", c.projection_bias);
  c.placement = parse_placement(doc.get_string("model.gcn_placement", to_string(c.placement)));
  c.seed = static_cast<std::uint64_t>(doc.get_int("model.seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

void ModelConfig::write(KeyValueDoc& doc) const {
  doc.set("model.variant", variant);
  doc.set_value("model.depth", depth);
  doc.set_value("model.dim", dim);
  doc.set_value("model.bone_dim", bone_dim);
  doc.set_value("model.bone_depth", bone_depth);
  doc.set_value("model.categories", categories);
  doc.set_value("model.frames", frames);
  doc.set_value("model.joints", joints);
  doc.set_value("model.state", state);
  doc.set_value("model.conv_kernel", conv_kernel);
  doc.set_value("model.dt_rank", dt_rank);
  doc.set_value("model.mlp_ratio", mlp_ratio);
  doc.set_value("model.dropout", dropout);
  doc.set_value("model.coord_scale", coord_scale);
  doc.set_value("model.bidirectional", bidirectional);
  doc.set_value("model.projection_bias", projection_bias);
  doc.set("model.gcn_placement", to_string(placement));
  doc.set_value("model.seed", static_cast<long long>(seed));
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string("model.") + what + " must be positive");
  };
  positive(dim, "dim");
  positive(bone_dim, "bone_dim");
  positive(bone_depth, "bone_depth");
  positive(frames, "frames");
  positive(joints, "joints");
  positive(state, "state");
  positive(conv_kernel, "conv_kernel");
  positive(mlp_ratio, "mlp_ratio");
  if (categories < 2) throw ConfigError("model.categories must be at least 2");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model.dropout must lie in [0, 1)");
  if (!(coord_scale > 0.0)) throw ConfigError("model.coord_scale must be positive");
  const std::size_t shrink = std::size_t{1} << (bone_depth - 1);
  if (bone_dim % shrink != 0)
    throw ConfigError("model.bone_dim = " + std::to_string(bone_dim) + " is not divisible by 2^" +
                      std::to_string(bone_depth - 1));
}

BlockConfig ModelConfig::block(std::size_t width) const {
  BlockConfig b;
  b.dim = width;
  b.expand = width;
  b.state = state;
  b.conv_kernel = conv_kernel;
  b.dt_rank = dt_rank ? dt_rank : (width + 15) / 16;
  b.mlp_ratio = mlp_ratio;
  b.bidirectional = bidirectional;
  b.projection_bias = projection_bias;
  b.placement = placement;
  return b;
}

}  // namespace poselift
