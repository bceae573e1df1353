#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fgsgt/bbox.hpp"
#include "fgsgt/io.hpp"

namespace fgsgt::synth {

/// A low-contrast scene: one Gaussian blob moving at constant velocity over a
/// flat background, a few similar-intensity distractor blobs bouncing around,
/// and additive Gaussian noise.
struct SceneSpec {
  std::size_t width = 160, height = 160;
  std::size_t frames = 100;
  double background = 60.0;
  double target_radius = 8.0;  // ground-truth box is 2r x 2r
  double target_intensity = 90.0;
  double start_cx = 80.0, start_cy = 80.0;
  double vx = 0.0, vy = 0.0;  // pixels per frame
  std::size_t distractors = 0;
  double distractor_radius = 5.0;
  double distractor_intensity = 80.0;
  double distractor_speed = 1.5;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  BBox box_at(std::size_t frame) const;
  /// Rejects specs whose target box leaves the frame at any frame.
  void validate() const;
};

struct Sequence {
  std::vector<io::GrayImage> frames;  // quantised to 8-bit levels
  std::vector<BBox> boxes;
};

Sequence render(const SceneSpec& spec);

/// Writes frames/00000.pgm ... and groundtruth.csv under dir.
void write_sequence(const std::filesystem::path& dir, const Sequence& seq);

/// render + write_sequence.
Sequence gen_sequence(const SceneSpec& spec, const std::filesystem::path& dir);

/// Draws start position and velocity from the seed so that the target stays
/// inside the frame for base.frames frames; other fields come from base.
SceneSpec random_scene(const SceneSpec& base, std::uint64_t seed, double max_speed);

}  // namespace fgsgt::synth
