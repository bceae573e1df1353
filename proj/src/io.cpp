#include "fgsgt/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifdef FGSGT_HAVE_PNG
#include <png.h>
#endif

namespace fgsgt::io {

namespace fs = std::filesystem;

double GrayImage::mean() const {
  if (pixels.empty()) return 0.0;
  double s = 0.0;
  for (double v : pixels) s += v;
  return s / static_cast<double>(pixels.size());
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

std::size_t parse_extent(const std::string& tok, const fs::path& path, const char* what) {
  try {
    const long v = std::stol(tok);
    if (v <= 0) throw std::invalid_argument("");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ": bad PGM " + what + " '" + tok + "'");
  }
}

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

#ifdef FGSGT_HAVE_PNG
GrayImage read_png(const fs::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw std::runtime_error(path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error(path.string() + ": " + img.message);
  }
  GrayImage out;
  out.width = img.width;
  out.height = img.height;
  out.pixels.assign(buf.begin(), buf.end());
  return out;
}
#endif

}  // namespace

GrayImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  if (pgm_token(in) != "P5") throw std::runtime_error(path.string() + ": not a binary PGM (P5)");
  GrayImage img;
  img.width = parse_extent(pgm_token(in), path, "width");
  img.height = parse_extent(pgm_token(in), path, "height");
  const std::size_t maxval = parse_extent(pgm_token(in), path, "maxval");
  if (maxval > 255) throw std::runtime_error(path.string() + ": 16-bit PGM is not supported");
  std::vector<unsigned char> buf(img.width * img.height);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
    throw std::runtime_error(path.string() + ": truncated pixel data");
  }
  img.pixels.resize(buf.size());
  const double s = 255.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = maxval == 255 ? buf[i] : buf[i] * s;
  return img;
}

void write_pgm(const fs::path& path, std::size_t width, std::size_t height, const std::vector<unsigned char>& bytes) {
  if (bytes.size() != width * height) throw std::invalid_argument("write_pgm: pixel count does not match extents");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_pgm(const fs::path& path, const GrayImage& image) {
  std::vector<unsigned char> bytes(image.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i], 0.0, 255.0)));
  }
  write_pgm(path, image.width, image.height, bytes);
}

bool png_supported() {
#ifdef FGSGT_HAVE_PNG
  return true;
#else
  return false;
#endif
}

GrayImage read_image(const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".pgm") return read_pgm(path);
  if (ext == ".png") {
#ifdef FGSGT_HAVE_PNG
    return read_png(path);
#else
    throw std::runtime_error(path.string() + ": built without PNG support");
#endif
  }
  throw std::runtime_error(path.string() + ": unsupported image type");
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  fs::path root = dir;
  if (fs::is_directory(dir / "frames")) root = dir / "frames";
  if (!fs::is_directory(root)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = lower_ext(e.path());
    if (ext == ".pgm" || (ext == ".png" && png_supported())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::runtime_error("no frames found in " + root.string());
  return out;
}

std::vector<double> crop_resize(const GrayImage& image, double cx, double cy, double side, std::size_t out_size) {
  if (!(side > 0) || out_size == 0) throw std::invalid_argument("crop_resize: empty crop");
  const double fill = image.mean();
  const double step = side / static_cast<double>(out_size);
  const double half = static_cast<double>(out_size) / 2.0;
  auto px = [&](long x, long y) {
    if (x < 0 || y < 0 || x >= static_cast<long>(image.width) || y >= static_cast<long>(image.height)) return fill;
    return image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
  };
  std::vector<double> out(out_size * out_size);
  for (std::size_t v = 0; v < out_size; ++v) {
    // Sample position in pixel-index space (pixel i has its centre at i + 0.5).
    const double sy = cy + (static_cast<double>(v) + 0.5 - half) * step - 0.5;
    const double fy = std::floor(sy);
    const double ty = sy - fy;
    const long y0 = static_cast<long>(fy);
    for (std::size_t u = 0; u < out_size; ++u) {
      const double sx = cx + (static_cast<double>(u) + 0.5 - half) * step - 0.5;
      const double fx = std::floor(sx);
      const double tx = sx - fx;
      const long x0 = static_cast<long>(fx);
      double val = (1 - tx) * (1 - ty) * px(x0, y0);
      if (tx > 0) val += tx * (1 - ty) * px(x0 + 1, y0);
      if (ty > 0) val += (1 - tx) * ty * px(x0, y0 + 1);
      if (tx > 0 && ty > 0) val += tx * ty * px(x0 + 1, y0 + 1);
      out[v * out_size + u] = val;
    }
  }
  return out;
}

std::vector<BoxRow> read_box_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  if (line.rfind("frame,cx,cy,w,h", 0) != 0) {
    throw std::runtime_error(path.string() + ": expected header 'frame,cx,cy,w,h', got '" + line + "'");
  }
  std::vector<BoxRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 5 && cols.size() != 6) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 5 or 6 columns");
    }
    try {
      BoxRow r;
      r.frame = std::stoul(cols[0]);
      r.box = {std::stod(cols[1]), std::stod(cols[2]), std::stod(cols[3]), std::stod(cols[4])};
      if (cols.size() == 6) r.score = std::stod(cols[5]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

void write_box_csv(const fs::path& path, const std::vector<BoxRow>& rows, bool with_score) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (with_score ? "frame,cx,cy,w,h,score\n" : "frame,cx,cy,w,h\n");
  char buf[256];
  for (const BoxRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g", r.frame, r.box.cx, r.box.cy, r.box.w, r.box.h);
    out << buf;
    if (with_score) {
      std::snprintf(buf, sizeof buf, ",%.17g", r.score.value_or(0.0));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace fgsgt::io
