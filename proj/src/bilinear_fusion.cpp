#include "fgsgt/bilinear_fusion.hpp"

#include <algorithm>
#include <stdexcept>

namespace fgsgt::fusion {

FlattenedFeature FlattenedFeature::from_map(const Tensor& map) {
  if (map.rank() != 4) throw std::invalid_argument("flatten: expected a (B, C, H, W) map, got " + shape_str(map.shape()));
  return {reshape(map, {map.dim(0), map.dim(1), map.dim(2) * map.dim(3)})};
}

FusionParams FusionParams::create(ParamStore& store, const std::string& prefix, std::size_t channels,
                                  std::size_t classes, Initializer& init) {
  FusionParams p;
  p.channels = channels;
  p.classes = classes;
  p.fc = Linear::create(store, prefix + "fc", channels * channels, classes, init);
  return p;
}

Tensor bilinear_pair(const FlattenedFeature& a, const FlattenedFeature& b) {
  if (a.data.rank() != 3 || b.data.rank() != 3) throw std::invalid_argument("bilinear_pair: operands must be (B, C, S)");
  if (a.batch() != b.batch()) {
    throw std::invalid_argument("bilinear_pair: batch extents differ (" + std::to_string(a.batch()) + " vs " +
                                std::to_string(b.batch()) + ")");
  }
  if (a.spatial() != b.spatial()) {
    throw std::invalid_argument("bilinear_pair: spatial extents differ (" + std::to_string(a.spatial()) + " vs " +
                                std::to_string(b.spatial()) + ")");
  }
  return matmul_batched(a.data, transpose_last2(b.data));
}

NormalizedBilinear normalize_bilinear(const Tensor& m) {
  if (m.rank() != 3) throw std::invalid_argument("normalize_bilinear: expected (B, C, C), got " + shape_str(m.shape()));
  NormalizedBilinear out;
  const Tensor flat = reshape(m, {m.dim(0), m.dim(1) * m.dim(2)});
  out.values = l2_normalize_rows(signed_sqrt(flat), &out.zero_rows);
  return out;
}

FusionOutput fuse_classify(const FlattenedFeature& x, const FlattenedFeature& y, const FlattenedFeature& z,
                           const FusionParams& params) {
  if (x.spatial() != y.spatial() || x.spatial() != z.spatial()) {
    throw std::invalid_argument("fuse_classify: misaligned spatial extents X=" + std::to_string(x.spatial()) +
                                " Y=" + std::to_string(y.spatial()) + " Z=" + std::to_string(z.spatial()));
  }
  if (x.channels() != y.channels() || x.channels() != z.channels()) {
    throw std::invalid_argument("fuse_classify: X, Y, Z must share a channel width to sum their bilinear pairs");
  }
  if (params.channels != x.channels()) {
    throw std::invalid_argument("fuse_classify: projection built for " + std::to_string(params.channels) +
                                " channels, features have " + std::to_string(x.channels()));
  }
  auto xy = normalize_bilinear(bilinear_pair(x, y));
  auto xz = normalize_bilinear(bilinear_pair(x, z));
  auto yz = normalize_bilinear(bilinear_pair(y, z));
  const Tensor summed = add(add(xy.values, xz.values), yz.values);

  FusionOutput out;
  out.o_bp = softmax(summed, 1);
  out.o_fused = softmax(params.fc(summed), 1);
  for (auto* nb : {&xy, &xz, &yz}) out.zero_rows.insert(out.zero_rows.end(), nb->zero_rows.begin(), nb->zero_rows.end());
  std::sort(out.zero_rows.begin(), out.zero_rows.end());
  out.zero_rows.erase(std::unique(out.zero_rows.begin(), out.zero_rows.end()), out.zero_rows.end());
  return out;
}

std::vector<Tensor> align_to_coarsest(const std::vector<Tensor>& maps) {
  if (maps.empty()) return {};
  std::size_t h = maps.front().dim(2), w = maps.front().dim(3);
  for (const Tensor& m : maps) {
    h = std::min(h, m.dim(2));
    w = std::min(w, m.dim(3));
  }
  std::vector<Tensor> out;
  for (const Tensor& m : maps) {
    const std::size_t fh = m.dim(2) / h, fw = m.dim(3) / w;
    if (fh != fw || m.dim(2) != fh * h || m.dim(3) != fw * w) {
      throw std::invalid_argument("align_to_coarsest: grid " + shape_str(m.shape()) +
                                  " is not an integer multiple of the coarsest grid");
    }
    out.push_back(fh == 1 ? m : avg_pool2d(m, fh, fh));
  }
  return out;
}

}  // namespace fgsgt::fusion
