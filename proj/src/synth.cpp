#include "fgsgt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>

namespace fgsgt::synth {

namespace fs = std::filesystem;

BBox SceneSpec::box_at(std::size_t frame) const {
  const double t = static_cast<double>(frame);
  return {start_cx + vx * t, start_cy + vy * t, 2 * target_radius, 2 * target_radius};
}

void SceneSpec::validate() const {
  if (width == 0 || height == 0 || frames == 0) throw std::invalid_argument("scene: empty frame size or count");
  if (!(target_radius > 0)) throw std::invalid_argument("scene: target radius must be positive");
  if (distractors > 0 && !(distractor_radius > 0)) throw std::invalid_argument("scene: distractor radius must be positive");
  if (noise_sigma < 0) throw std::invalid_argument("scene: noise sigma must be non-negative");
  // The path is linear, so checking the endpoints covers every frame.
  for (std::size_t f : {std::size_t{0}, frames - 1}) {
    const BBox b = box_at(f);
    if (b.left() < 0 || b.top() < 0 || b.right() > static_cast<double>(width) ||
        b.bottom() > static_cast<double>(height)) {
      throw std::invalid_argument("scene: target leaves the " + std::to_string(width) + "x" + std::to_string(height) +
                                  " frame at frame " + std::to_string(f));
    }
  }
}

namespace {

struct Blob {
  double x, y, vx, vy;
};

// Adds a Gaussian blob of peak `amp` and sigma r/2, centred at (cx, cy).
void splat(std::vector<double>& img, std::size_t w, std::size_t h, double cx, double cy, double r, double amp) {
  const double sigma = r / 2;
  const double inv = 1.0 / (2 * sigma * sigma);
  const double reach = 3 * sigma + 1;
  const long x0 = std::max(0L, static_cast<long>(std::floor(cx - reach)));
  const long x1 = std::min(static_cast<long>(w) - 1, static_cast<long>(std::ceil(cx + reach)));
  const long y0 = std::max(0L, static_cast<long>(std::floor(cy - reach)));
  const long y1 = std::min(static_cast<long>(h) - 1, static_cast<long>(std::ceil(cy + reach)));
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      img[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] += amp * std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
}

}  // namespace

Sequence render(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double W = static_cast<double>(spec.width), H = static_cast<double>(spec.height);

  std::vector<Blob> blobs;
  for (std::size_t k = 0; k < spec.distractors; ++k) {
    const double r = spec.distractor_radius;
    const double angle = 2 * M_PI * unit(rng);
    blobs.push_back({r + unit(rng) * (W - 2 * r), r + unit(rng) * (H - 2 * r), spec.distractor_speed * std::cos(angle),
                     spec.distractor_speed * std::sin(angle)});
  }

  Sequence seq;
  for (std::size_t f = 0; f < spec.frames; ++f) {
    std::vector<double> img(spec.width * spec.height, spec.background);
    const BBox box = spec.box_at(f);
    for (const Blob& b : blobs) {
      splat(img, spec.width, spec.height, b.x, b.y, spec.distractor_radius, spec.distractor_intensity - spec.background);
    }
    splat(img, spec.width, spec.height, box.cx, box.cy, spec.target_radius, spec.target_intensity - spec.background);
    if (spec.noise_sigma > 0) {
      for (double& v : img) v += spec.noise_sigma * noise(rng);
    }
    io::GrayImage frame{spec.width, spec.height, std::move(img)};
    for (double& v : frame.pixels) v = std::round(std::clamp(v, 0.0, 255.0));
    seq.frames.push_back(std::move(frame));
    seq.boxes.push_back(box);

    // Distractors bounce off the frame edges.
    for (Blob& b : blobs) {
      b.x += b.vx;
      b.y += b.vy;
      const double r = spec.distractor_radius;
      if (b.x < r || b.x > W - r) {
        b.vx = -b.vx;
        b.x = std::clamp(b.x, r, W - r);
      }
      if (b.y < r || b.y > H - r) {
        b.vy = -b.vy;
        b.y = std::clamp(b.y, r, H - r);
      }
    }
  }
  return seq;
}

void write_sequence(const fs::path& dir, const Sequence& seq) {
  fs::create_directories(dir / "frames");
  std::vector<io::BoxRow> rows;
  char name[32];
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    std::snprintf(name, sizeof name, "%05zu.pgm", f);
    io::write_pgm(dir / "frames" / name, seq.frames[f]);
    rows.push_back({f, seq.boxes[f], std::nullopt});
  }
  io::write_box_csv(dir / "groundtruth.csv", rows, false);
}

Sequence gen_sequence(const SceneSpec& spec, const fs::path& dir) {
  Sequence seq = render(spec);
  write_sequence(dir, seq);
  return seq;
}

SceneSpec random_scene(const SceneSpec& base, std::uint64_t seed, double max_speed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SceneSpec s = base;
  s.seed = rng();
  const double r = base.target_radius;
  const double travel = static_cast<double>(base.frames - 1);
  auto axis = [&](double extent, double& start, double& vel) {
    const double lo = r + 1, hi = extent - r - 1;
    const double vmax = std::min(max_speed, (hi - lo) / std::max(travel, 1.0));
    vel = (2 * unit(rng) - 1) * vmax;
    // Start range keeping both endpoints inside [lo, hi].
    const double a = std::max(lo, lo - vel * travel), b = std::min(hi, hi - vel * travel);
    start = a + unit(rng) * (b - a);
  };
  axis(static_cast<double>(base.width), s.start_cx, s.vx);
  axis(static_cast<double>(base.height), s.start_cy, s.vy);
  s.validate();
  return s;
}

}  // namespace fgsgt::synth
