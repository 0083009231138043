#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <vector>

#include <png.h>

#include "cli.hpp"
#include "vern/errors.hpp"

namespace vern::cli {
namespace {

constexpr int kMaxSide = 1024;
constexpr int kMargin = 16;

struct Rgb {
  unsigned char r, g, b;
};

// Linear ramp, purple at 0 to red at 1.
Rgb ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const auto lerp = [t](double a, double b) { return static_cast<unsigned char>(std::lround(a + t * (b - a))); };
  return {lerp(128, 255), lerp(0, 0), lerp(128, 0)};
}

double typical_spacing(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() < 2) return 1.0;
  std::vector<double> nearest(xs.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < xs.size(); ++j) {
      if (i != j) nearest[i] = std::min(nearest[i], std::hypot(xs[i] - xs[j], ys[i] - ys[j]));
    }
  }
  std::nth_element(nearest.begin(), nearest.begin() + static_cast<std::ptrdiff_t>(nearest.size() / 2), nearest.end());
  const double d = nearest[nearest.size() / 2];
  return d > 0.0 ? d : 1.0;
}

}  // namespace

void write_heatmap_png(const std::filesystem::path& path, const std::vector<double>& xs,
                       const std::vector<double>& ys, const std::vector<double>& values,
                       const std::vector<std::size_t>& highlight) {
  if (xs.empty() || xs.size() != ys.size() || xs.size() != values.size()) {
    throw UsageError("heatmap png: coordinate/value count mismatch");
  }
  const double spacing = typical_spacing(xs, ys);
  const double min_x = *std::min_element(xs.begin(), xs.end()) - spacing / 2;
  const double max_x = *std::max_element(xs.begin(), xs.end()) + spacing / 2;
  const double min_y = *std::min_element(ys.begin(), ys.end()) - spacing / 2;
  const double max_y = *std::max_element(ys.begin(), ys.end()) + spacing / 2;
  const double span = std::max(max_x - min_x, max_y - min_y);
  const double scale = (kMaxSide - 2 * kMargin) / span;
  const int width = static_cast<int>(std::ceil((max_x - min_x) * scale)) + 2 * kMargin;
  const int height = static_cast<int>(std::ceil((max_y - min_y) * scale)) + 2 * kMargin;
  const double radius = std::max(2.0, 0.45 * spacing * scale);

  std::vector<unsigned char> pixels(static_cast<std::size_t>(width) * height * 3, 255);
  const auto paint_disc = [&](double cx, double cy, double r_outer, double r_inner, Rgb c) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r_outer)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(cx + r_outer)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r_outer)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(cy + r_outer)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
        if (d > r_outer || d < r_inner) continue;
        unsigned char* px = &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
        px[0] = c.r;
        px[1] = c.g;
        px[2] = c.b;
      }
    }
  };
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cx = kMargin + (xs[i] - min_x) * scale;
    const double cy = kMargin + (ys[i] - min_y) * scale;
    paint_disc(cx, cy, radius, 0.0, ramp(values[i]));
  }
  for (std::size_t i : highlight) {
    const double cx = kMargin + (xs[i] - min_x) * scale;
    const double cy = kMargin + (ys[i] - min_y) * scale;
    paint_disc(cx, cy, radius, std::max(0.0, radius - 2.0), {20, 20, 20});
  }

  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) png_write_row(png, &pixels[static_cast<std::size_t>(y) * width * 3]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace vern::cli
