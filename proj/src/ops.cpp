#include "fgsgt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>

namespace fgsgt {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                shape_str(x.shape()));
  }
}

// Applies f elementwise; df(x, y) is the local derivative.
template <class F, class DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  std::vector<double> y = out;
  return Tensor::from_op(op, x.shape(), std::move(out), {x}, [x, y = std::move(y), df](std::span<const double> g) {
    auto gx = x.grad_mut();
    const auto xv = x.values();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * df(xv[i], y[i]);
  });
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t pad, std::size_t stride, std::size_t dilation,
                        const char* axis) {
  const std::size_t span = dilation * (k - 1) + 1;
  if (in + 2 * pad < span) {
    throw std::invalid_argument(std::string("conv2d: kernel span ") + std::to_string(span) +
                                " exceeds padded input " + axis + " extent " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - span) / stride + 1;
}

// Range of output indices o for which o*stride - pad + offset lies in [0, in).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t stride,
                                                std::ptrdiff_t shift) {
  // shift = offset - pad
  std::ptrdiff_t lo = 0;
  if (shift < 0) lo = (-shift + static_cast<std::ptrdiff_t>(stride) - 1) / static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t hi_excl = 0;
  const std::ptrdiff_t limit = static_cast<std::ptrdiff_t>(in) - shift;  // need o*stride < limit
  if (limit > 0) hi_excl = (limit + static_cast<std::ptrdiff_t>(stride) - 1) / static_cast<std::ptrdiff_t>(stride);
  hi_excl = std::min<std::ptrdiff_t>(hi_excl, static_cast<std::ptrdiff_t>(out));
  if (hi_excl < lo) hi_excl = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi_excl)};
}

}  // namespace

// ---------------------------------------------------------------- configs

ConvSpec ConvSpec::same(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw, std::size_t stride,
                        std::size_t dilation) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = kh;
  s.kernel_w = kw;
  s.stride = stride;
  s.dilation = dilation;
  s.pad_h = dilation * (kh - 1) / 2;
  s.pad_w = dilation * (kw - 1) / 2;
  return s;
}

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0 || dilation == 0) {
    throw std::invalid_argument("ConvSpec: channels, kernel, stride and dilation must be positive");
  }
}

std::size_t ConvSpec::out_h(std::size_t in_h) const { return conv_extent(in_h, kernel_h, pad_h, stride, dilation, "H"); }
std::size_t ConvSpec::out_w(std::size_t in_w) const { return conv_extent(in_w, kernel_w, pad_w, stride, dilation, "W"); }

void ActivationConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("leaky rectification slope must lie in (0, 1), got " + std::to_string(alpha));
  }
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::from_op("add", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto gt = t->grad_mut();
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return Tensor::from_op("sub", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    if (a.requires_grad()) {
      auto ga = a.grad_mut();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_mut();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::from_op("mul", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    if (a.requires_grad()) {
      auto ga = a.grad_mut();
      const auto bv = b.values();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_mut();
      const auto av = a.values();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary("add_scalar", a, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw std::invalid_argument("log: input must be positive, got " + std::to_string(v));
  }
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& x) {
  return unary("abs", x, [](double v) { return std::fabs(v); },
               [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor leaky_relu(const Tensor& x, const ActivationConfig& cfg) {
  cfg.validate();
  const double alpha = cfg.alpha;
  return unary("leaky_relu", x, [alpha](double v) { return std::max(alpha * v, v); },
               [alpha](double v, double) { return v > 0 ? 1.0 : alpha; });
}

Tensor prelu(const Tensor& x, const Tensor& slopes) {
  if (x.rank() < 2) throw std::invalid_argument("prelu: input needs a channel axis, got " + shape_str(x.shape()));
  require_rank("prelu slopes", slopes, 1);
  const std::size_t channels = x.dim(1);
  if (slopes.dim(0) != channels) {
    throw std::invalid_argument("prelu: " + std::to_string(slopes.dim(0)) + " slopes for " + std::to_string(channels) +
                                " channels");
  }
  const AxisSplit sp = split_at(x.shape(), 1);
  const auto xv = x.values(), av = slopes.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t k = (o * channels + c) * sp.inner + i;
        out[k] = xv[k] > 0 ? xv[k] : av[c] * xv[k];
      }
  return Tensor::from_op("prelu", x.shape(), std::move(out), {x, slopes}, [x, slopes, sp](std::span<const double> g) {
    const auto xv = x.values(), av = slopes.values();
    const std::size_t channels = sp.extent;
    if (x.requires_grad()) {
      auto gx = x.grad_mut();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t k = (o * channels + c) * sp.inner + i;
            gx[k] += g[k] * (xv[k] > 0 ? 1.0 : av[c]);
          }
    }
    if (slopes.requires_grad()) {
      auto ga = slopes.grad_mut();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t k = (o * channels + c) * sp.inner + i;
            if (xv[k] <= 0) ga[c] += g[k] * xv[k];
          }
    }
  });
}

Tensor signed_sqrt(const Tensor& x) {
  return unary(
      "signed_sqrt", x,
      [](double v) { return v > 0 ? std::sqrt(v) : (v < 0 ? -std::sqrt(-v) : 0.0); },
      [](double v, double) { return v == 0.0 ? 0.0 : 0.5 / std::sqrt(std::fabs(v)); });
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return Tensor::from_op("sum", {1}, {s}, {x}, [x](std::span<const double> g) {
    auto gx = x.grad_mut();
    for (double& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.values()) s += v;
  return Tensor::from_op("mean", {1}, {s / n}, {x}, [x, n](std::span<const double> g) {
    auto gx = x.grad_mut();
    for (double& v : gx) v += g[0] / n;
  });
}

// ---------------------------------------------------------------- shape

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  const auto xv = x.values();
  return Tensor::from_op("reshape", std::move(shape), std::vector<double>(xv.begin(), xv.end()), {x},
                         [x](std::span<const double> g) {
                           auto gx = x.grad_mut();
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                         });
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw std::invalid_argument("transpose_last2: rank < 2 for " + shape_str(x.shape()));
  Shape s = x.shape();
  const std::size_t rows = s[s.size() - 2], cols = s[s.size() - 1];
  const std::size_t batch = x.numel() / (rows * cols);
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[b * rows * cols + c * rows + r] = xv[b * rows * cols + r * cols + c];
  return Tensor::from_op("transpose", std::move(s), std::move(out), {x},
                         [x, batch, rows, cols](std::span<const double> g) {
                           auto gx = x.grad_mut();
                           for (std::size_t b = 0; b < batch; ++b)
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < cols; ++c)
                                 gx[b * rows * cols + r * cols + c] += g[b * rows * cols + c * rows + r];
                         });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw std::invalid_argument("concat: axis out of range for " + shape_str(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == ref[i];
    if (!ok) {
      throw std::invalid_argument("concat: " + shape_str(s) + " incompatible with " + shape_str(ref) +
                                  " outside axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit total = split_at(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t ext = p.dim(axis);
    const auto pv = p.values();
    for (std::size_t o = 0; o < total.outer; ++o)
      std::copy_n(pv.begin() + o * ext * total.inner, ext * total.inner,
                  out.begin() + (o * total.extent + offset) * total.inner);
    offset += ext;
  }
  return Tensor::from_op("concat", out_shape, std::move(out), parts, [parts, axis, total](std::span<const double> g) {
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
      const std::size_t ext = p.dim(axis);
      if (p.requires_grad()) {
        auto gp = p.grad_mut();
        for (std::size_t o = 0; o < total.outer; ++o)
          for (std::size_t k = 0; k < ext * total.inner; ++k)
            gp[o * ext * total.inner + k] += g[(o * total.extent + offset) * total.inner + k];
      }
      offset += ext;
    }
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank()) throw std::invalid_argument("slice: axis out of range for " + shape_str(x.shape()));
  if (length == 0 || start + length > x.dim(axis)) {
    throw std::invalid_argument("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                ") outside axis extent " + std::to_string(x.dim(axis)));
  }
  const AxisSplit sp = split_at(x.shape(), axis);
  Shape s = x.shape();
  s[axis] = length;
  const auto xv = x.values();
  std::vector<double> out(shape_numel(s));
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(xv.begin() + (o * sp.extent + start) * sp.inner, length * sp.inner,
                out.begin() + o * length * sp.inner);
  return Tensor::from_op("slice", std::move(s), std::move(out), {x}, [x, sp, start, length](std::span<const double> g) {
    auto gx = x.grad_mut();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t k = 0; k < length * sp.inner; ++k) gx[(o * sp.extent + start) * sp.inner + k] += g[o * length * sp.inner + k];
  });
}

Tensor index_select(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& indices) {
  if (axis >= x.rank()) throw std::invalid_argument("index_select: axis out of range for " + shape_str(x.shape()));
  if (indices.empty()) throw std::invalid_argument("index_select: empty index list");
  const AxisSplit sp = split_at(x.shape(), axis);
  for (std::size_t idx : indices) {
    if (idx >= sp.extent) {
      throw std::invalid_argument("index_select: index " + std::to_string(idx) + " outside extent " +
                                  std::to_string(sp.extent));
    }
  }
  Shape s = x.shape();
  s[axis] = indices.size();
  const auto xv = x.values();
  const std::size_t n = indices.size();
  std::vector<double> out(shape_numel(s));
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < n; ++k)
      std::copy_n(xv.begin() + (o * sp.extent + indices[k]) * sp.inner, sp.inner, out.begin() + (o * n + k) * sp.inner);
  return Tensor::from_op("index_select", std::move(s), std::move(out), {x}, [x, sp, indices](std::span<const double> g) {
    auto gx = x.grad_mut();
    const std::size_t n = indices.size();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < sp.inner; ++i)
          gx[(o * sp.extent + indices[k]) * sp.inner + i] += g[(o * n + k) * sp.inner + i];
  });
}

// ---------------------------------------------------------------- conv

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvSpec& spec) {
  spec.validate();
  require_rank("conv2d input", input, 4);
  require_rank("conv2d weight", weight, 4);
  const Shape expect_w{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
  if (weight.shape() != expect_w) {
    throw std::invalid_argument("conv2d: weight shape " + shape_str(weight.shape()) + " does not match spec " +
                                shape_str(expect_w));
  }
  if (input.dim(1) != spec.in_channels) {
    throw std::invalid_argument("conv2d: input channel dimension is " + std::to_string(input.dim(1)) +
                                " but spec expects " + std::to_string(spec.in_channels));
  }
  if (bias.defined() && bias.shape() != Shape{spec.out_channels}) {
    throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) + " does not match out_channels " +
                                std::to_string(spec.out_channels));
  }
  const std::size_t B = input.dim(0), Ci = spec.in_channels, H = input.dim(2), W = input.dim(3);
  const std::size_t Co = spec.out_channels, KH = spec.kernel_h, KW = spec.kernel_w;
  const std::size_t OH = spec.out_h(H), OW = spec.out_w(W);
  const std::size_t S = spec.stride, D = spec.dilation;
  const auto xv = input.values(), wv = weight.values();
  std::vector<double> out(B * Co * OH * OW, 0.0);

  // Row/column validity only depends on (kernel offset); precompute the ranges.
  std::vector<std::pair<std::size_t, std::size_t>> rows(KH), cols(KW);
  for (std::size_t kh = 0; kh < KH; ++kh)
    rows[kh] = valid_range(OH, H, S, static_cast<std::ptrdiff_t>(kh * D) - static_cast<std::ptrdiff_t>(spec.pad_h));
  for (std::size_t kw = 0; kw < KW; ++kw)
    cols[kw] = valid_range(OW, W, S, static_cast<std::ptrdiff_t>(kw * D) - static_cast<std::ptrdiff_t>(spec.pad_w));

  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Co; ++co) {
      double* op = out.data() + (b * Co + co) * OH * OW;
      if (bias.defined()) std::fill(op, op + OH * OW, bias.values()[co]);
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const double* ip = xv.data() + (b * Ci + ci) * H * W;
        for (std::size_t kh = 0; kh < KH; ++kh)
          for (std::size_t kw = 0; kw < KW; ++kw) {
            const double w = wv[((co * Ci + ci) * KH + kh) * KW + kw];
            if (w == 0.0) continue;
            const auto [r0, r1] = rows[kh];
            const auto [c0, c1] = cols[kw];
            for (std::size_t oh = r0; oh < r1; ++oh) {
              const std::size_t ih = oh * S + kh * D - spec.pad_h;
              const double* irow = ip + ih * W;
              double* orow = op + oh * OW;
              if (S == 1) {
                const double* src = irow + c0 + kw * D - spec.pad_w;
                for (std::size_t ow = c0; ow < c1; ++ow) orow[ow] += w * src[ow - c0];
              } else {
                for (std::size_t ow = c0; ow < c1; ++ow) orow[ow] += w * irow[ow * S + kw * D - spec.pad_w];
              }
            }
          }
      }
    }

  return Tensor::from_op(
      "conv2d", {B, Co, OH, OW}, std::move(out), {input, weight, bias},
      [input, weight, bias, spec, B, Ci, H, W, Co, KH, KW, OH, OW, S, D, rows, cols](std::span<const double> g) {
        const bool need_x = input.requires_grad();
        const bool need_w = weight.requires_grad();
        if (bias.defined() && bias.requires_grad()) {
          auto gb = bias.grad_mut();
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t co = 0; co < Co; ++co) {
              const double* gp = g.data() + (b * Co + co) * OH * OW;
              double s = 0.0;
              for (std::size_t k = 0; k < OH * OW; ++k) s += gp[k];
              gb[co] += s;
            }
        }
        if (!need_x && !need_w) return;
        const auto xv = input.values(), wv = weight.values();
        std::span<double> gx, gw;
        if (need_x) gx = input.grad_mut();
        if (need_w) gw = weight.grad_mut();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t co = 0; co < Co; ++co) {
            const double* gp = g.data() + (b * Co + co) * OH * OW;
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              const double* ip = xv.data() + (b * Ci + ci) * H * W;
              double* gip = need_x ? gx.data() + (b * Ci + ci) * H * W : nullptr;
              for (std::size_t kh = 0; kh < KH; ++kh)
                for (std::size_t kw = 0; kw < KW; ++kw) {
                  const std::size_t widx = ((co * Ci + ci) * KH + kh) * KW + kw;
                  const double w = wv[widx];
                  const auto [r0, r1] = rows[kh];
                  const auto [c0, c1] = cols[kw];
                  double acc = 0.0;
                  for (std::size_t oh = r0; oh < r1; ++oh) {
                    const std::size_t ih = oh * S + kh * D - spec.pad_h;
                    const double* grow = gp + oh * OW;
                    for (std::size_t ow = c0; ow < c1; ++ow) {
                      const std::size_t iw = ow * S + kw * D - spec.pad_w;
                      acc += grow[ow] * ip[ih * W + iw];
                      if (gip) gip[ih * W + iw] += w * grow[ow];
                    }
                  }
                  if (need_w) gw[widx] += acc;
                }
            }
          }
      });
}

Tensor matmul_batched(const Tensor& a, const Tensor& b) {
  require_rank("matmul_batched lhs", a, 3);
  require_rank("matmul_batched rhs", b, 3);
  if (a.dim(0) != b.dim(0)) {
    throw std::invalid_argument("matmul_batched: batch extents differ " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  if (a.dim(2) != b.dim(1)) {
    throw std::invalid_argument("matmul_batched: inner dimension mismatch, lhs K=" + std::to_string(a.dim(2)) +
                                " rhs K=" + std::to_string(b.dim(1)));
  }
  const std::size_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(B * M * N, 0.0);
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t k = 0; k < K; ++k) {
        const double x = av[(bi * M + m) * K + k];
        const double* brow = bv.data() + (bi * K + k) * N;
        double* orow = out.data() + (bi * M + m) * N;
        for (std::size_t n = 0; n < N; ++n) orow[n] += x * brow[n];
      }
  return Tensor::from_op("matmul_batched", {B, M, N}, std::move(out), {a, b}, [a, b, B, M, K, N](std::span<const double> g) {
    const auto av = a.values(), bv = b.values();
    if (a.requires_grad()) {
      auto ga = a.grad_mut();
      for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t m = 0; m < M; ++m)
          for (std::size_t k = 0; k < K; ++k) {
            double s = 0.0;
            for (std::size_t n = 0; n < N; ++n) s += g[(bi * M + m) * N + n] * bv[(bi * K + k) * N + n];
            ga[(bi * M + m) * K + k] += s;
          }
    }
    if (b.requires_grad()) {
      auto gb = b.grad_mut();
      for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t m = 0; m < M; ++m)
          for (std::size_t k = 0; k < K; ++k) {
            const double x = av[(bi * M + m) * K + k];
            for (std::size_t n = 0; n < N; ++n) gb[(bi * K + k) * N + n] += x * g[(bi * M + m) * N + n];
          }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("linear input", x, 2);
  require_rank("linear weight", weight, 2);
  const std::size_t B = x.dim(0), In = x.dim(1), Out = weight.dim(0);
  if (weight.dim(1) != In) {
    throw std::invalid_argument("linear: weight expects " + std::to_string(weight.dim(1)) + " inputs, got " +
                                std::to_string(In));
  }
  if (bias.defined() && bias.shape() != Shape{Out}) {
    throw std::invalid_argument("linear: bias shape " + shape_str(bias.shape()) + " for " + std::to_string(Out) +
                                " outputs");
  }
  const auto xv = x.values(), wv = weight.values();
  std::vector<double> out(B * Out);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < Out; ++o) {
      double s = bias.defined() ? bias.values()[o] : 0.0;
      for (std::size_t i = 0; i < In; ++i) s += wv[o * In + i] * xv[b * In + i];
      out[b * Out + o] = s;
    }
  return Tensor::from_op("linear", {B, Out}, std::move(out), {x, weight, bias},
                         [x, weight, bias, B, In, Out](std::span<const double> g) {
                           const auto xv = x.values(), wv = weight.values();
                           if (x.requires_grad()) {
                             auto gx = x.grad_mut();
                             for (std::size_t b = 0; b < B; ++b)
                               for (std::size_t o = 0; o < Out; ++o)
                                 for (std::size_t i = 0; i < In; ++i) gx[b * In + i] += g[b * Out + o] * wv[o * In + i];
                           }
                           if (weight.requires_grad()) {
                             auto gw = weight.grad_mut();
                             for (std::size_t b = 0; b < B; ++b)
                               for (std::size_t o = 0; o < Out; ++o)
                                 for (std::size_t i = 0; i < In; ++i) gw[o * In + i] += g[b * Out + o] * xv[b * In + i];
                           }
                           if (bias.defined() && bias.requires_grad()) {
                             auto gb = bias.grad_mut();
                             for (std::size_t b = 0; b < B; ++b)
                               for (std::size_t o = 0; o < Out; ++o) gb[o] += g[b * Out + o];
                           }
                         });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
  }
  const AxisSplit sp = split_at(x.shape(), axis);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.extent * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < sp.extent; ++k) mx = std::max(mx, xv[base + k * sp.inner]);
      double s = 0.0;
      for (std::size_t k = 0; k < sp.extent; ++k) {
        const double e = std::exp(xv[base + k * sp.inner] - mx);
        out[base + k * sp.inner] = e;
        s += e;
      }
      for (std::size_t k = 0; k < sp.extent; ++k) out[base + k * sp.inner] /= s;
    }
  std::vector<double> y = out;
  return Tensor::from_op("softmax", x.shape(), std::move(out), {x}, [x, sp, y = std::move(y)](std::span<const double> g) {
    auto gx = x.grad_mut();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.extent * sp.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < sp.extent; ++k) dot += g[base + k * sp.inner] * y[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.extent; ++k) {
          const std::size_t j = base + k * sp.inner;
          gx[j] += y[j] * (g[j] - dot);
        }
      }
  });
}

Tensor l2_normalize_rows(const Tensor& x, std::vector<std::size_t>* zero_rows) {
  require_rank("l2_normalize_rows", x, 2);
  const std::size_t R = x.dim(0), C = x.dim(1);
  const auto xv = x.values();
  std::vector<double> out(xv.size(), 0.0), norms(R, 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += xv[r * C + c] * xv[r * C + c];
    norms[r] = std::sqrt(s);
    if (norms[r] == 0.0) {
      if (zero_rows) zero_rows->push_back(r);
      continue;
    }
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] = xv[r * C + c] / norms[r];
  }
  std::vector<double> y = out;
  return Tensor::from_op("l2_normalize_rows", x.shape(), std::move(out), {x},
                         [x, R, C, norms = std::move(norms), y = std::move(y)](std::span<const double> g) {
                           auto gx = x.grad_mut();
                           for (std::size_t r = 0; r < R; ++r) {
                             if (norms[r] == 0.0) continue;
                             double dot = 0.0;
                             for (std::size_t c = 0; c < C; ++c) dot += g[r * C + c] * y[r * C + c];
                             for (std::size_t c = 0; c < C; ++c)
                               gx[r * C + c] += (g[r * C + c] - y[r * C + c] * dot) / norms[r];
                           }
                         });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean, Tensor& running_var,
                  const BatchNormConfig& cfg) {
  if (x.rank() < 2) throw std::invalid_argument("batch_norm: input needs a channel axis, got " + shape_str(x.shape()));
  const std::size_t C = x.dim(1);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    if (t->shape() != Shape{C}) {
      throw std::invalid_argument("batch_norm: per-channel tensor of shape " + shape_str(t->shape()) + " for " +
                                  std::to_string(C) + " channels");
    }
  }
  const AxisSplit sp = split_at(x.shape(), 1);
  const std::size_t count = sp.outer * sp.inner;
  const auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  std::vector<double> mu(C), inv_std(C);
  if (cfg.training) {
    auto rm = running_mean.values_mut();
    auto rv = running_var.values_mut();
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < sp.inner; ++i) s += xv[(o * C + c) * sp.inner + i];
      const double m = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const double d = xv[(o * C + c) * sp.inner + i] - m;
          v += d * d;
        }
      const double var = v / static_cast<double>(count);
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + cfg.eps);
      const double unbiased = count > 1 ? v / static_cast<double>(count - 1) : var;
      rm[c] = (1.0 - cfg.momentum) * rm[c] + cfg.momentum * m;
      rv[c] = (1.0 - cfg.momentum) * rv[c] + cfg.momentum * unbiased;
    }
  } else {
    const auto rm = running_mean.values(), rv = running_var.values();
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + cfg.eps);
    }
  }
  std::vector<double> xhat(xv.size()), out(xv.size());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t k = (o * C + c) * sp.inner + i;
        xhat[k] = (xv[k] - mu[c]) * inv_std[c];
        out[k] = gv[c] * xhat[k] + bv[c];
      }
  const bool training = cfg.training;
  return Tensor::from_op(
      "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, sp, C, count, training, inv_std = std::move(inv_std), xhat = std::move(xhat)](std::span<const double> g) {
        const auto gv = gamma.values();
        if (gamma.requires_grad() || beta.requires_grad()) {
          std::vector<double> dg(C, 0.0), db(C, 0.0);
          for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t i = 0; i < sp.inner; ++i) {
                const std::size_t k = (o * C + c) * sp.inner + i;
                dg[c] += g[k] * xhat[k];
                db[c] += g[k];
              }
          if (gamma.requires_grad()) {
            auto gg = gamma.grad_mut();
            for (std::size_t c = 0; c < C; ++c) gg[c] += dg[c];
          }
          if (beta.requires_grad()) {
            auto gb = beta.grad_mut();
            for (std::size_t c = 0; c < C; ++c) gb[c] += db[c];
          }
        }
        if (!x.requires_grad()) return;
        auto gx = x.grad_mut();
        const double n = static_cast<double>(count);
        for (std::size_t c = 0; c < C; ++c) {
          if (!training) {
            for (std::size_t o = 0; o < sp.outer; ++o)
              for (std::size_t i = 0; i < sp.inner; ++i) {
                const std::size_t k = (o * C + c) * sp.inner + i;
                gx[k] += g[k] * gv[c] * inv_std[c];
              }
            continue;
          }
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t i = 0; i < sp.inner; ++i) {
              const std::size_t k = (o * C + c) * sp.inner + i;
              const double dxh = g[k] * gv[c];
              s1 += dxh;
              s2 += dxh * xhat[k];
            }
          for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t i = 0; i < sp.inner; ++i) {
              const std::size_t k = (o * C + c) * sp.inner + i;
              const double dxh = g[k] * gv[c];
              gx[k] += inv_std[c] / n * (n * dxh - s1 - xhat[k] * s2);
            }
        }
      });
}

// ---------------------------------------------------------------- spatial

Tensor max_pool2d(const Tensor& x, std::size_t window, std::size_t stride, std::size_t padding) {
  require_rank("max_pool2d", x, 4);
  if (window == 0 || stride == 0) throw std::invalid_argument("max_pool2d: window and stride must be positive");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (window > H + 2 * padding || window > W + 2 * padding) {
    throw std::invalid_argument("max_pool2d: window " + std::to_string(window) + " larger than padded input " +
                                std::to_string(H + 2 * padding) + "x" + std::to_string(W + 2 * padding));
  }
  if (padding * 2 > window) throw std::invalid_argument("max_pool2d: padding must be at most half the window");
  const std::size_t OH = (H + 2 * padding - window) / stride + 1, OW = (W + 2 * padding - window) / stride + 1;
  const auto xv = x.values();
  std::vector<double> out(B * C * OH * OW);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t p = 0; p < B * C; ++p)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        bool found = false;
        for (std::size_t kh = 0; kh < window; ++kh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + kh) - static_cast<std::ptrdiff_t>(padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kw = 0; kw < window; ++kw) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kw) - static_cast<std::ptrdiff_t>(padding);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
            const std::size_t idx = p * H * W + static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw);
            // Strict comparison keeps the first maximum in row-major order.
            if (!found || xv[idx] > best) {
              best = xv[idx];
              best_idx = idx;
              found = true;
            }
          }
        }
        const std::size_t o = (p * OH + oh) * OW + ow;
        out[o] = best;
        arg[o] = best_idx;
      }
  return Tensor::from_op("max_pool2d", {B, C, OH, OW}, std::move(out), {x}, [x, arg = std::move(arg)](std::span<const double> g) {
    auto gx = x.grad_mut();
    for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += g[o];
  });
}

Tensor avg_pool2d(const Tensor& x, std::size_t window, std::size_t stride, std::size_t padding) {
  require_rank("avg_pool2d", x, 4);
  if (window == 0 || stride == 0) throw std::invalid_argument("avg_pool2d: window and stride must be positive");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (window > H + 2 * padding || window > W + 2 * padding) {
    throw std::invalid_argument("avg_pool2d: window larger than padded input");
  }
  if (padding * 2 > window) throw std::invalid_argument("avg_pool2d: padding must be at most half the window");
  const std::size_t OH = (H + 2 * padding - window) / stride + 1, OW = (W + 2 * padding - window) / stride + 1;
  auto window_bounds = [=](std::size_t o, std::size_t extent) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(o * stride) - static_cast<std::ptrdiff_t>(padding);
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(start, 0);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(start + static_cast<std::ptrdiff_t>(window), static_cast<std::ptrdiff_t>(extent));
    return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi));
  };
  const auto xv = x.values();
  std::vector<double> out(B * C * OH * OW);
  for (std::size_t p = 0; p < B * C; ++p)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow) {
        const auto [h0, h1] = window_bounds(oh, H);
        const auto [w0, w1] = window_bounds(ow, W);
        double s = 0.0;
        for (std::size_t ih = h0; ih < h1; ++ih)
          for (std::size_t iw = w0; iw < w1; ++iw) s += xv[p * H * W + ih * W + iw];
        out[(p * OH + oh) * OW + ow] = s / static_cast<double>((h1 - h0) * (w1 - w0));
      }
  return Tensor::from_op("avg_pool2d", {B, C, OH, OW}, std::move(out), {x},
                         [x, B, C, H, W, OH, OW, window_bounds](std::span<const double> g) {
                           auto gx = x.grad_mut();
                           for (std::size_t p = 0; p < B * C; ++p)
                             for (std::size_t oh = 0; oh < OH; ++oh)
                               for (std::size_t ow = 0; ow < OW; ++ow) {
                                 const auto [h0, h1] = window_bounds(oh, H);
                                 const auto [w0, w1] = window_bounds(ow, W);
                                 const double share =
                                     g[(p * OH + oh) * OW + ow] / static_cast<double>((h1 - h0) * (w1 - w0));
                                 for (std::size_t ih = h0; ih < h1; ++ih)
                                   for (std::size_t iw = w0; iw < w1; ++iw) gx[p * H * W + ih * W + iw] += share;
                               }
                         });
}

namespace {

// Source taps for one output coordinate of a bilinear resize.
struct Tap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<Tap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0) src = 0;
    std::size_t i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor upsample(const Tensor& x, std::size_t factor, UpsampleMode mode) {
  require_rank("upsample", x, 4);
  if (factor < 1) throw std::invalid_argument("upsample: factor must be >= 1");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = H * factor, OW = W * factor;
  const auto xv = x.values();
  std::vector<double> out(B * C * OH * OW);
  if (factor == 1) {
    std::copy(xv.begin(), xv.end(), out.begin());
    return Tensor::from_op("upsample", x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
      auto gx = x.grad_mut();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
  }
  if (mode == UpsampleMode::kNearest) {
    for (std::size_t p = 0; p < B * C; ++p)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow)
          out[(p * OH + oh) * OW + ow] = xv[(p * H + oh / factor) * W + ow / factor];
    return Tensor::from_op("upsample_nearest", {B, C, OH, OW}, std::move(out), {x},
                           [x, B, C, H, W, OH, OW, factor](std::span<const double> g) {
                             auto gx = x.grad_mut();
                             for (std::size_t p = 0; p < B * C; ++p)
                               for (std::size_t oh = 0; oh < OH; ++oh)
                                 for (std::size_t ow = 0; ow < OW; ++ow)
                                   gx[(p * H + oh / factor) * W + ow / factor] += g[(p * OH + oh) * OW + ow];
                           });
  }
  auto rows = bilinear_taps(H, factor), cols = bilinear_taps(W, factor);
  for (std::size_t p = 0; p < B * C; ++p) {
    const double* ip = xv.data() + p * H * W;
    for (std::size_t oh = 0; oh < OH; ++oh) {
      const Tap& r = rows[oh];
      for (std::size_t ow = 0; ow < OW; ++ow) {
        const Tap& c = cols[ow];
        const double top = (1 - c.w1) * ip[r.i0 * W + c.i0] + c.w1 * ip[r.i0 * W + c.i1];
        const double bot = (1 - c.w1) * ip[r.i1 * W + c.i0] + c.w1 * ip[r.i1 * W + c.i1];
        out[(p * OH + oh) * OW + ow] = (1 - r.w1) * top + r.w1 * bot;
      }
    }
  }
  return Tensor::from_op("upsample_bilinear", {B, C, OH, OW}, std::move(out), {x},
                         [x, B, C, H, W, OH, OW, rows = std::move(rows), cols = std::move(cols)](std::span<const double> g) {
                           auto gx = x.grad_mut();
                           for (std::size_t p = 0; p < B * C; ++p) {
                             double* gp = gx.data() + p * H * W;
                             for (std::size_t oh = 0; oh < OH; ++oh) {
                               const Tap& r = rows[oh];
                               for (std::size_t ow = 0; ow < OW; ++ow) {
                                 const Tap& c = cols[ow];
                                 const double go = g[(p * OH + oh) * OW + ow];
                                 gp[r.i0 * W + c.i0] += go * (1 - r.w1) * (1 - c.w1);
                                 gp[r.i0 * W + c.i1] += go * (1 - r.w1) * c.w1;
                                 gp[r.i1 * W + c.i0] += go * r.w1 * (1 - c.w1);
                                 gp[r.i1 * W + c.i1] += go * r.w1 * c.w1;
                               }
                             }
                           }
                         });
}

Tensor binary_cross_entropy(const Tensor& pred, const Tensor& target, double eps) {
  require_same_shape("binary_cross_entropy", pred, target);
  const auto pv = pred.values(), tv = target.values();
  const double n = static_cast<double>(pv.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (tv[i] < 0.0 || tv[i] > 1.0) throw std::invalid_argument("binary_cross_entropy: target outside [0, 1]");
    const double p = std::clamp(pv[i], eps, 1.0 - eps);
    s -= tv[i] * std::log(p) + (1.0 - tv[i]) * std::log(1.0 - p);
  }
  return Tensor::from_op("binary_cross_entropy", {1}, {s / n}, {pred}, [pred, target, eps, n](std::span<const double> g) {
    auto gp = pred.grad_mut();
    const auto pv = pred.values(), tv = target.values();
    for (std::size_t i = 0; i < gp.size(); ++i) {
      if (pv[i] < eps || pv[i] > 1.0 - eps) continue;  // clamped: flat
      const double p = pv[i];
      gp[i] += g[0] / n * (-tv[i] / p + (1.0 - tv[i]) / (1.0 - p));
    }
  });
}

}  // namespace fgsgt
