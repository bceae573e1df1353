#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "fgsgt/bbox.hpp"
#include "fgsgt/ops.hpp"
#include "fgsgt/siamese.hpp"

// Straight-line loop implementations that share no code with the library
// kernels. Every array is row-major, extents passed explicitly.
namespace fgsgt::oracle {

using Vec = std::vector<double>;

Vec conv2d(const Vec& x, std::size_t B, std::size_t H, std::size_t W, const Vec& weight, const Vec& bias,
           const ConvSpec& spec);

/// Padding positions never win.
Vec max_pool2d(const Vec& x, std::size_t B, std::size_t C, std::size_t H, std::size_t W, std::size_t window,
               std::size_t stride, std::size_t padding);

Vec matmul(const Vec& a, const Vec& b, std::size_t B, std::size_t M, std::size_t K, std::size_t N);

/// out[b][i][j] = sum_s x[b][i][s] * y[b][j][s].
Vec bilinear_pair(const Vec& x, const Vec& y, std::size_t B, std::size_t C, std::size_t S);

Vec dw_corr(const Vec& search, const Vec& templ, std::size_t B, std::size_t C, std::size_t Hs, std::size_t Ws,
            std::size_t Ht, std::size_t Wt);

Vec weighted_fuse(const std::array<Vec, 3>& branches, const std::array<double, 3>& weights);

struct Choice {
  std::size_t index = 0;
  BBox box;
  double pscore = 0;
};

/// Scores every anchor from scratch and keeps the first maximum.
Choice select(const Vec& cls, const Vec& reg, const std::vector<BBox>& anchors, std::size_t rows, std::size_t cols,
              std::size_t per_cell, const BBox& prev, const siamese::SelectConfig& cfg, double frame);

struct Fusion {
  Vec o_bp, o_fused;
};

/// x, y, z are (B, C, S); fc_w is (K, C*C), fc_b is (K).
Fusion fusion(const Vec& x, const Vec& y, const Vec& z, std::size_t B, std::size_t C, std::size_t S, const Vec& fc_w,
              const Vec& fc_b, std::size_t K);

/// Axis-aligned IoU by explicit interval overlap.
double box_iou(const BBox& a, const BBox& b);

}  // namespace fgsgt::oracle
