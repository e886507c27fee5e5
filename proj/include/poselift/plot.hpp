#pragma once

// Static skeleton renderings: front (x-y) and side (z-y) orthographic views
// of one frame, written as PNG.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "poselift/skeleton.hpp"

namespace poselift {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Image(std::size_t w, std::size_t h, std::uint8_t fill = 255) : width(w), height(h), rgb(w * h * 3, fill) {}
  void set(long x, long y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

struct PlotOptions {
  std::size_t panel = 320;      // pixels per view
  double extent_mm = 2200.0;    // world span covered by a panel
};

// Prediction drawn in red; ground truth, when given, in green.
Image render_frame(const PoseSeq3D& pred, const PoseSeq3D* gt, std::size_t frame, const SkeletonTopology& topo,
                   const PlotOptions& opt = {});

void write_png(const std::filesystem::path& path, const Image& img);

// One PNG per selected frame, "<stem>_f<index>.png"; returns the paths.
std::vector<std::filesystem::path> plot_sequence(const PoseSeq3D& pred, const PoseSeq3D* gt, const SkeletonTopology& topo,
                                                 const std::filesystem::path& out_dir, const std::string& stem,
                                                 std::size_t stride, const PlotOptions& opt = {});

}  // namespace poselift
