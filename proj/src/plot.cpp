#include "poselift/plot.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "poselift/error.hpp"

namespace poselift {

void Image::set(long x, long y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (x < 0 || y < 0 || x >= static_cast<long>(width) || y >= static_cast<long>(height)) return;
  auto* p = &rgb[(static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)) * 3];
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

namespace {

struct Color {
  std::uint8_t r, g, b;
};

void line(Image& img, long x0, long y0, long x1, long y1, Color c) {
  const long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  for (;;) {
    for (long ox = 0; ox <= 1; ++ox)
      for (long oy = 0; oy <= 1; ++oy) img.set(x0 + ox, y0 + oy, c.r, c.g, c.b);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void dot(Image& img, long cx, long cy, long radius, Color c) {
  for (long y = -radius; y <= radius; ++y)
    for (long x = -radius; x <= radius; ++x)
      if (x * x + y * y <= radius * radius) img.set(cx + x, cy + y, c.r, c.g, c.b);
}

void draw(Image& img, const PoseSeq3D& pose, std::size_t frame, const SkeletonTopology& topo, const PlotOptions& opt,
          Color c) {
  const double px_per_mm = static_cast<double>(opt.panel) / opt.extent_mm;
  const double half = static_cast<double>(opt.panel) / 2.0;
  // Panel 0: x right, y up. Panel 1: z right, y up.
  auto to_px = [&](std::size_t j, int panel) {
    const double h = panel == 0 ? pose(frame, j, 0) : pose(frame, j, 2);
    const double v = pose(frame, j, 1);
    return std::pair<long, long>{static_cast<long>(std::lround(half + h * px_per_mm)) +
                                     static_cast<long>(panel) * static_cast<long>(opt.panel),
                                 static_cast<long>(std::lround(half - v * px_per_mm))};
  };
  for (int panel = 0; panel < 2; ++panel)
    for (std::size_t j = 0; j < topo.num_joints(); ++j) {
      const auto [x, y] = to_px(j, panel);
      if (const int p = topo.parent(j); p >= 0) {
        const auto [xp, yp] = to_px(static_cast<std::size_t>(p), panel);
        line(img, xp, yp, x, y, c);
      }
      dot(img, x, y, 3, c);
    }
}

}  // namespace

Image render_frame(const PoseSeq3D& pred, const PoseSeq3D* gt, std::size_t frame, const SkeletonTopology& topo,
                   const PlotOptions& opt) {
  require(frame < pred.frames(), "plot: frame " + std::to_string(frame) + " out of range");
  require(pred.joints() == topo.num_joints(), "plot: pose and topology disagree on joint count");
  if (gt) require(gt->frames() == pred.frames() && gt->joints() == pred.joints(), "plot: ground truth shape differs");
  Image img(2 * opt.panel, opt.panel);
  // Panel divider and axes.
  for (std::size_t y = 0; y < opt.panel; ++y) img.set(static_cast<long>(opt.panel), static_cast<long>(y), 160, 160, 160);
  for (std::size_t x = 0; x < 2 * opt.panel; ++x)
    img.set(static_cast<long>(x), static_cast<long>(opt.panel / 2), 230, 230, 230);
  if (gt) draw(img, *gt, frame, topo, opt, {40, 160, 60});
  draw(img, pred, frame, topo, opt, {200, 40, 40});
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw DataError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(&img.rgb[y * img.width * 3]));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::filesystem::path> plot_sequence(const PoseSeq3D& pred, const PoseSeq3D* gt, const SkeletonTopology& topo,
                                                 const std::filesystem::path& out_dir, const std::string& stem,
                                                 std::size_t stride, const PlotOptions& opt) {
  require(stride > 0, "plot stride must be positive");
  std::vector<std::filesystem::path> out;
  for (std::size_t f = 0; f < pred.frames(); f += stride) {
    char name[64];
    std::snprintf(name, sizeof name, "_f%04zu.png", f);
    const auto path = out_dir / (stem + name);
    write_png(path, render_frame(pred, gt, f, topo, opt));
    out.push_back(path);
  }
  return out;
}

}  // namespace poselift
