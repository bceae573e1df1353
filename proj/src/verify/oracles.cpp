#include "fgsgt/verify/oracles.hpp"

#include <algorithm>
#include <cmath>

namespace fgsgt::oracle {

Vec conv2d(const Vec& x, std::size_t B, std::size_t H, std::size_t W, const Vec& weight, const Vec& bias,
           const ConvSpec& s) {
  const long OH = (static_cast<long>(H) + 2 * static_cast<long>(s.pad_h) -
                   static_cast<long>(s.dilation * (s.kernel_h - 1)) - 1) / static_cast<long>(s.stride) + 1;
  const long OW = (static_cast<long>(W) + 2 * static_cast<long>(s.pad_w) -
                   static_cast<long>(s.dilation * (s.kernel_w - 1)) - 1) / static_cast<long>(s.stride) + 1;
  Vec out(B * s.out_channels * static_cast<std::size_t>(OH * OW));
  std::size_t o = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < s.out_channels; ++co)
      for (long oh = 0; oh < OH; ++oh)
        for (long ow = 0; ow < OW; ++ow) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (std::size_t ci = 0; ci < s.in_channels; ++ci)
            for (std::size_t kh = 0; kh < s.kernel_h; ++kh)
              for (std::size_t kw = 0; kw < s.kernel_w; ++kw) {
                const long ih = oh * static_cast<long>(s.stride) + static_cast<long>(kh * s.dilation) - static_cast<long>(s.pad_h);
                const long iw = ow * static_cast<long>(s.stride) + static_cast<long>(kw * s.dilation) - static_cast<long>(s.pad_w);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
                acc += weight[((co * s.in_channels + ci) * s.kernel_h + kh) * s.kernel_w + kw] *
                       x[((b * s.in_channels + ci) * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)];
              }
          out[o++] = acc;
        }
  return out;
}

Vec max_pool2d(const Vec& x, std::size_t B, std::size_t C, std::size_t H, std::size_t W, std::size_t window,
               std::size_t stride, std::size_t padding) {
  const std::size_t OH = (H + 2 * padding - window) / stride + 1, OW = (W + 2 * padding - window) / stride + 1;
  Vec out;
  for (std::size_t p = 0; p < B * C; ++p)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow) {
        double best = -HUGE_VAL;
        for (std::size_t i = 0; i < window; ++i)
          for (std::size_t j = 0; j < window; ++j) {
            const long ih = static_cast<long>(oh * stride + i) - static_cast<long>(padding);
            const long iw = static_cast<long>(ow * stride + j) - static_cast<long>(padding);
            if (ih >= 0 && iw >= 0 && ih < static_cast<long>(H) && iw < static_cast<long>(W)) {
              best = std::max(best, x[p * H * W + static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)]);
            }
          }
        out.push_back(best);
      }
  return out;
}

Vec matmul(const Vec& a, const Vec& b, std::size_t B, std::size_t M, std::size_t K, std::size_t N) {
  Vec out(B * M * N, 0.0);
  for (std::size_t bb = 0; bb < B; ++bb)
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += a[(bb * M + i) * K + k] * b[(bb * K + k) * N + j];
        out[(bb * M + i) * N + j] = acc;
      }
  return out;
}

Vec bilinear_pair(const Vec& x, const Vec& y, std::size_t B, std::size_t C, std::size_t S) {
  Vec out(B * C * C, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t j = 0; j < C; ++j) {
        double acc = 0.0;
        for (std::size_t s = 0; s < S; ++s) acc += x[(b * C + i) * S + s] * y[(b * C + j) * S + s];
        out[(b * C + i) * C + j] = acc;
      }
  return out;
}

Vec dw_corr(const Vec& search, const Vec& templ, std::size_t B, std::size_t C, std::size_t Hs, std::size_t Ws,
            std::size_t Ht, std::size_t Wt) {
  const std::size_t Ho = Hs - Ht + 1, Wo = Ws - Wt + 1;
  Vec out;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = 0.0;
          for (std::size_t u = 0; u < Ht; ++u)
            for (std::size_t v = 0; v < Wt; ++v) {
              acc += templ[((b * C + c) * Ht + u) * Wt + v] * search[((b * C + c) * Hs + i + u) * Ws + j + v];
            }
          out.push_back(acc);
        }
  return out;
}

Vec weighted_fuse(const std::array<Vec, 3>& branches, const std::array<double, 3>& weights) {
  Vec out(branches[0].size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < 3; ++k) acc += weights[k] * branches[k][i];
    out[i] = acc;
  }
  return out;
}

Choice select(const Vec& cls, const Vec& reg, const std::vector<BBox>& anchors, std::size_t rows, std::size_t cols,
              std::size_t A, const BBox& prev, const siamese::SelectConfig& cfg, double frame) {
  const std::size_t cells = rows * cols;
  const double pi = std::acos(-1.0);
  auto hann = [pi](std::size_t i, std::size_t n) {
    return n == 1 ? 1.0 : 0.5 * (1.0 - std::cos(2.0 * pi * static_cast<double>(i) / static_cast<double>(n - 1)));
  };
  auto context = [](double w, double h) { return std::sqrt((w + (w + h) / 2) * (h + (w + h) / 2)); };
  Choice best;
  bool have = false;
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t cell = r * cols + c, j = a * cells + cell;
        const double fg = cls[(A + a) * cells + cell], bg = cls[a * cells + cell];
        const double score = 1.0 / (1.0 + std::exp(bg - fg));
        const BBox& an = anchors[j];
        const BBox box{an.cx + reg[a * cells + cell] * an.w, an.cy + reg[(A + a) * cells + cell] * an.h,
                       an.w * std::exp(reg[(2 * A + a) * cells + cell]), an.h * std::exp(reg[(3 * A + a) * cells + cell])};
        const double sr = context(box.w, box.h) / context(prev.w, prev.h);
        const double rr = (prev.w / prev.h) / (box.w / box.h);
        const double change = std::max(sr, 1 / sr) * std::max(rr, 1 / rr);
        const double penalty = std::exp(-(change - 1) * cfg.penalty_k);
        const double pscore =
            penalty * score * (1 - cfg.window_influence) + hann(r, rows) * hann(c, cols) * cfg.window_influence;
        if (!have || pscore > best.pscore) {
          have = true;
          best = {j, box, pscore};
        }
      }
  BBox& b = best.box;
  b.cx = std::min(std::max(b.cx, 0.0), frame);
  b.cy = std::min(std::max(b.cy, 0.0), frame);
  b.w = std::min(std::max(b.w, cfg.min_size), frame);
  b.h = std::min(std::max(b.h, cfg.min_size), frame);
  return best;
}

Fusion fusion(const Vec& x, const Vec& y, const Vec& z, std::size_t B, std::size_t C, std::size_t S, const Vec& fc_w,
              const Vec& fc_b, std::size_t K) {
  const std::size_t D = C * C;
  auto normalized = [&](const Vec& p, const Vec& q) {
    Vec m = bilinear_pair(p, q, B, C, S);
    for (double& v : m) v = v < 0 ? -std::sqrt(-v) : std::sqrt(v);
    for (std::size_t b = 0; b < B; ++b) {
      double n2 = 0.0;
      for (std::size_t d = 0; d < D; ++d) n2 += m[b * D + d] * m[b * D + d];
      if (n2 == 0.0) continue;
      const double n = std::sqrt(n2);
      for (std::size_t d = 0; d < D; ++d) m[b * D + d] /= n;
    }
    return m;
  };
  const Vec xy = normalized(x, y), xz = normalized(x, z), yz = normalized(y, z);
  Vec sum(B * D);
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = xy[i] + xz[i] + yz[i];
  auto softmax_rows = [](Vec v, std::size_t rows, std::size_t width) {
    for (std::size_t r = 0; r < rows; ++r) {
      double m = -HUGE_VAL;
      for (std::size_t i = 0; i < width; ++i) m = std::max(m, v[r * width + i]);
      double s = 0.0;
      for (std::size_t i = 0; i < width; ++i) s += std::exp(v[r * width + i] - m);
      for (std::size_t i = 0; i < width; ++i) v[r * width + i] = std::exp(v[r * width + i] - m) / s;
    }
    return v;
  };
  Fusion out;
  out.o_bp = softmax_rows(sum, B, D);
  Vec logits(B * K);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k) {
      double acc = fc_b[k];
      for (std::size_t d = 0; d < D; ++d) acc += fc_w[k * D + d] * sum[b * D + d];
      logits[b * K + k] = acc;
    }
  out.o_fused = softmax_rows(logits, B, K);
  return out;
}

double box_iou(const BBox& a, const BBox& b) {
  const double x0 = std::max(a.cx - a.w / 2, b.cx - b.w / 2), x1 = std::min(a.cx + a.w / 2, b.cx + b.w / 2);
  const double y0 = std::max(a.cy - a.h / 2, b.cy - b.h / 2), y1 = std::min(a.cy + a.h / 2, b.cy + b.h / 2);
  const double inter = (x1 > x0 && y1 > y0) ? (x1 - x0) * (y1 - y0) : 0.0;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

}  // namespace fgsgt::oracle
