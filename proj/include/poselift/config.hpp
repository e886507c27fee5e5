#pragma once

#include <cstdint>
#include <string>

#include "poselift/blocks.hpp"
#include "poselift/kv.hpp"

namespace poselift {

// Every dimension and constant the networks need. Keys in a config document
// live under "model.".
struct ModelConfig {
  std::string variant = "tiny";
  std::size_t depth = 8;         // L, refinement layers
  std::size_t dim = 64;          // D
  std::size_t bone_dim = 64;     // d0 of the bone-aware pyramid
  std::size_t bone_depth = 4;    // pyramid layers
  int categories = 6;            // n polar-angle bins
  std::size_t frames = 243;      // f, bound into the frame embedding
  std::size_t joints = 17;       // j
  std::size_t state = 16;        // N
  std::size_t conv_kernel = 4;   // k
  std::size_t dt_rank = 0;       // 0 selects ceil(width / 16)
  std::size_t mlp_ratio = 2;     // rho
  double dropout = 0.1;
  double coord_scale = 1000.0;   // mm per network unit, inputs and outputs
  bool bidirectional = true;
  bool projection_bias = false;
  GcnPlacement placement = GcnPlacement::inner;
  std::uint64_t seed = 0;

  static ModelConfig tiny();
  static ModelConfig large();
  // Starts from the variant named by "model.variant" (tiny when absent) and
  // applies every other "model." key on top.
  static ModelConfig from_doc(const KeyValueDoc& doc);
  void write(KeyValueDoc& doc) const;
  void validate() const;

  // Block settings for a stream of width `width`.
  BlockConfig block(std::size_t width) const;
};

std::string to_string(GcnPlacement p);
GcnPlacement parse_placement(const std::string& s);

}  // namespace poselift
