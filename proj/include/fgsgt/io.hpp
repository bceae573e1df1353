#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fgsgt/bbox.hpp"

namespace fgsgt::io {

/// Single-channel image with intensities on the 0..255 scale. Pixel (x, y)
/// covers [x, x+1) x [y, y+1); box coordinates use the same frame.
struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<double> pixels;  // row-major

  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  double mean() const;
};

GrayImage read_pgm(const std::filesystem::path& path);
/// Clamps to [0, 255] and rounds to the nearest level; writes binary P5.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<unsigned char>& bytes);
bool png_supported();
/// Dispatches on extension: .pgm always, .png when built with libpng.
GrayImage read_image(const std::filesystem::path& path);
/// Sorted .pgm / .png files of a sequence directory (or its frames/ subdir).
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// Square crop of side `side` image pixels centred on (cx, cy), resampled
/// bilinearly to out_size x out_size. Samples outside the frame take the
/// frame mean.
std::vector<double> crop_resize(const GrayImage& image, double cx, double cy, double side, std::size_t out_size);

struct BoxRow {
  std::size_t frame = 0;
  BBox box;
  std::optional<double> score;
};

/// CSV with header "frame,cx,cy,w,h" and an optional trailing "score".
std::vector<BoxRow> read_box_csv(const std::filesystem::path& path);
void write_box_csv(const std::filesystem::path& path, const std::vector<BoxRow>& rows, bool with_score);

}  // namespace fgsgt::io
