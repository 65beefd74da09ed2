#include "lcm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lcm/kernels.hpp"

namespace lcm::ops {

namespace {


std::string dims(const Shape& s) { return s.str(); }

void require_same(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw ShapeError(std::string(what) + ": shape mismatch " + dims(a) + " vs " + dims(b));
}

struct ConvGeom {
  int n, ci, h, w;
  int co, kh, kw;
  int stride, pad;
  int ho, wo;
  std::size_t rows() const { return static_cast<std::size_t>(ci) * kh * kw; }
  std::size_t cols() const { return static_cast<std::size_t>(ho) * wo; }
};

// Output columns [lo, hi) whose input column for kernel tap kx is in range.
std::pair<int, int> valid_range(const ConvGeom& g, int kx) {
  const int off = kx - g.pad;  // ix = ox * stride + off
  int lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  int hi = g.w - off <= 0 ? 0 : (g.w - off + g.stride - 1) / g.stride;
  hi = std::min(hi, g.wo);
  lo = std::min(lo, hi);
  return {lo, hi};
}

// Column matrix rows hold ld entries; image n occupies [n * cols, (n+1) * cols).
template <typename T>
void im2col(const T* img, const ConvGeom& g, T* col, std::size_t ld) {
  for (int c = 0; c < g.ci; ++c) {
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        T* row = col + ((static_cast<std::size_t>(c) * g.kh + ky) * g.kw + kx) * ld;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, T{0});
            continue;
          }
          const T* src = img + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          const auto [lo, hi] = valid_range(g, kx);
          std::fill(dst, dst + lo, T{0});
          if (g.stride == 1) {
            std::copy(src + lo - g.pad + kx, src + hi - g.pad + kx, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride - g.pad + kx];
          }
          std::fill(dst + hi, dst + g.wo, T{0});
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* img, std::size_t ld) {
  for (int c = 0; c < g.ci; ++c) {
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(c) * g.kh + ky) * g.kw + kx) * ld;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          T* dst = img + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          const T* src = row + static_cast<std::size_t>(oy) * g.wo;
          const auto [lo, hi] = valid_range(g, kx);
          for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride - g.pad + kx] += src[ox];
        }
      }
    }
  }
}

ConvGeom conv_geometry(const Shape& xs, const Shape& ws, const Shape& bs, int stride, int padding) {
  require_rank4(xs, "conv2d input");
  require_rank4(ws, "conv2d weight");
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  if (padding < 0) throw ContractError("conv2d: padding must be >= 0");
  if (xs[1] != ws[1]) {
    throw ShapeError("conv2d: input has " + std::to_string(xs[1]) + " channels but weight expects " +
                     std::to_string(ws[1]) + " (weight " + dims(ws) + ")");
  }
  if (bs.rank() != 1 || bs[0] != ws[0]) {
    throw ShapeError("conv2d: bias " + dims(bs) + " does not match " + std::to_string(ws[0]) + " output channels");
  }
  ConvGeom g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], stride, padding, 0, 0};
  const int eh = g.h + 2 * padding - g.kh;
  const int ew = g.w + 2 * padding - g.kw;
  if (eh < 0 || ew < 0) {
    throw GeometryError("conv2d: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                        " does not fit padded input " + dims(xs));
  }
  g.ho = eh / stride + 1;
  g.wo = ew / stride + 1;
  return g;
}

}  // namespace

// Images are processed in groups whose column matrices (rows x G*P) stay
// cache sized; small maps still get long vectors.
constexpr std::size_t kGroupColumns = 1024;

int group_size(const ConvGeom& g) {
  return static_cast<int>(std::clamp<std::size_t>(kGroupColumns / g.cols(), 1, static_cast<std::size_t>(g.n)));
}

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var b, int stride, int padding) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  const Tensor<T>& bv = tape.value(b);
  const ConvGeom g = conv_geometry(xv.shape(), wv.shape(), bv.shape(), stride, padding);

  const std::size_t rows = g.rows();
  const std::size_t cols = g.cols();
  const int group = group_size(g);
  const std::size_t in_img = static_cast<std::size_t>(g.ci) * g.h * g.w;
  std::vector<T> col(rows * cols * group);
  std::vector<T> acc(static_cast<std::size_t>(g.co) * cols * group);
  Tensor<T> out(Shape{g.n, g.co, g.ho, g.wo});
  T* o = out.data().data();

  for (int n0 = 0; n0 < g.n; n0 += group) {
    const int gn = std::min(group, g.n - n0);
    const std::size_t ld = cols * gn;
    for (int k = 0; k < gn; ++k) im2col(xv.data().data() + (n0 + k) * in_img, g, col.data() + k * cols, ld);
    for (int co = 0; co < g.co; ++co) std::fill(acc.begin() + co * ld, acc.begin() + (co + 1) * ld, bv[co]);
    kernels::gemm_acc(g.co, ld, rows, wv.data().data(), rows, col.data(), ld, acc.data(), ld);
    for (int k = 0; k < gn; ++k)
      for (int co = 0; co < g.co; ++co)
        std::copy_n(acc.data() + co * ld + k * cols, cols, o + (static_cast<std::size_t>(n0 + k) * g.co + co) * cols);
  }

  return tape.record("conv2d", std::move(out), {x, w, b}, [x, w, b, g](Tape<T>& t, Var self) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    const T* dv = t.grad(self).data().data();
    const std::size_t rows = g.rows();
    const std::size_t cols = g.cols();
    const int group = group_size(g);
    const std::size_t in_img = static_cast<std::size_t>(g.ci) * g.h * g.w;
    const bool need_x = t.requires_grad(x);
    const bool need_w = t.requires_grad(w);
    const bool need_b = t.requires_grad(b);
    T* db = need_b ? t.grad_buffer(b).data().data() : nullptr;
    T* dw = need_w ? t.grad_buffer(w).data().data() : nullptr;
    T* dx = need_x ? t.grad_buffer(x).data().data() : nullptr;

    std::vector<T> wt;  // weight transposed: rows x co
    if (need_x) {
      wt.resize(rows * g.co);
      for (int co = 0; co < g.co; ++co)
        for (std::size_t r = 0; r < rows; ++r) wt[r * g.co + co] = wv[co * rows + r];
    }
    std::vector<T> d(static_cast<std::size_t>(g.co) * cols * group);
    std::vector<T> col(need_w ? rows * cols * group : 0);
    std::vector<T> dcol(need_x ? rows * cols * group : 0);
    for (int n0 = 0; n0 < g.n; n0 += group) {
      const int gn = std::min(group, g.n - n0);
      const std::size_t ld = cols * gn;
      // output gradient regrouped as co x (gn*P)
      for (int k = 0; k < gn; ++k)
        for (int co = 0; co < g.co; ++co)
          std::copy_n(dv + (static_cast<std::size_t>(n0 + k) * g.co + co) * cols, cols, d.data() + co * ld + k * cols);
      if (need_b) {
        for (int co = 0; co < g.co; ++co) db[co] += kernels::sum(d.data() + co * ld, ld);
      }
      if (need_w) {
        for (int k = 0; k < gn; ++k) im2col(xv.data().data() + (n0 + k) * in_img, g, col.data() + k * cols, ld);
        for (int co = 0; co < g.co; ++co) {
          T* dwrow = dw + co * rows;
          for (std::size_t r = 0; r < rows; ++r) dwrow[r] += kernels::dot(d.data() + co * ld, col.data() + r * ld, ld);
        }
      }
      if (need_x) {
        std::fill(dcol.begin(), dcol.begin() + rows * ld, T{0});
        kernels::gemm_acc(rows, ld, g.co, wt.data(), g.co, d.data(), ld, dcol.data(), ld);
        for (int k = 0; k < gn; ++k) col2im_add(dcol.data() + k * cols, g, dx + (n0 + k) * in_img, ld);
      }
    }
  });
}

template <typename T>
Var upsample_nearest(Tape<T>& tape, Var x, int scale) {
  if (scale < 1) throw ContractError("upsample: scale must be >= 1");
  const Tensor<T>& xv = tape.value(x);
  require_rank4(xv.shape(), "upsample input");
  const int N = xv.n(), C = xv.c(), H = xv.h(), W = xv.w();
  Tensor<T> out(Shape{N, C, H * scale, W * scale});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H * scale; ++y)
        for (int xx = 0; xx < W * scale; ++xx) out.at(n, c, y, xx) = xv.at(n, c, y / scale, xx / scale);

  return tape.record("upsample_nearest", std::move(out), {x}, [x, scale](Tape<T>& t, Var self) {
    const Tensor<T>& d = t.grad(self);
    Tensor<T>& dx = t.grad_buffer(x);
    for (int n = 0; n < d.n(); ++n)
      for (int c = 0; c < d.c(); ++c)
        for (int y = 0; y < d.h(); ++y)
          for (int xx = 0; xx < d.w(); ++xx) dx.at(n, c, y / scale, xx / scale) += d.at(n, c, y, xx);
  });
}

template <typename T>
Var expand2_to(Tape<T>& tape, Var x, int h, int w) {
  const Tensor<T>& xv = tape.value(x);
  require_rank4(xv.shape(), "expand2_to input");
  if ((h + 1) / 2 != xv.h() || (w + 1) / 2 != xv.w()) {
    throw ShapeError("expand2_to: " + dims(xv.shape()) + " is not the half-size of " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  Tensor<T> out(Shape{xv.n(), xv.c(), h, w});
  for (int n = 0; n < xv.n(); ++n)
    for (int c = 0; c < xv.c(); ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) out.at(n, c, y, xx) = xv.at(n, c, y / 2, xx / 2);

  return tape.record("expand2_to", std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const Tensor<T>& d = t.grad(self);
    Tensor<T>& dx = t.grad_buffer(x);
    for (int n = 0; n < d.n(); ++n)
      for (int c = 0; c < d.c(); ++c)
        for (int y = 0; y < d.h(); ++y)
          for (int xx = 0; xx < d.w(); ++xx) dx.at(n, c, y / 2, xx / 2) += d.at(n, c, y, xx);
  });
}

template <typename T>
Var upsample_conv(Tape<T>& tape, Var x, Var w, Var b, int scale) {
  if (scale < 2) throw ContractError("upsample_conv: scale must be >= 2");
  const Shape& ws = tape.value(w).shape();
  require_rank4(ws, "upsample_conv weight");
  if (ws[2] % 2 == 0 || ws[2] != ws[3]) {
    throw ContractError("upsample_conv: size-preserving padding needs an odd square kernel, got " + dims(ws));
  }
  Var up = upsample_nearest(tape, x, scale);
  return conv2d(tape, up, w, b, 1, ws[2] / 2);
}

template <typename T>
Var leaky_relu(Tape<T>& tape, Var x, T slope) {
  if (!(slope >= T{0} && slope < T{1})) throw ContractError("leaky_relu: slope must lie in [0, 1)");
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T{0} ? xv[i] : slope * xv[i];
  return tape.record("leaky_relu", std::move(out), {x}, [x, slope](Tape<T>& t, Var self) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& d = t.grad(self);
    Tensor<T>& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < d.size(); ++i) dx[i] += xv[i] > T{0} ? d[i] : slope * d[i];
  });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = T{1} / (T{1} + std::exp(-xv[i]));
  return tape.record("sigmoid", std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const Tensor<T>& y = t.value(self);
    const Tensor<T>& d = t.grad(self);
    Tensor<T>& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * y[i] * (T{1} - y[i]);
  });
}

template <typename T>
Var channel_norm(Tape<T>& tape, Var x, Var gain, Var shift, NormStats<T>& stats, NormMode mode,
                 NormOptions options) {
  const Tensor<T>& xv = tape.value(x);
  require_rank4(xv.shape(), "channel_norm input");
  const int N = xv.n(), C = xv.c();
  const std::size_t plane = static_cast<std::size_t>(xv.h()) * xv.w();
  const Tensor<T>& gv = tape.value(gain);
  const Tensor<T>& sv = tape.value(shift);
  if (gv.size() != static_cast<std::size_t>(C) || sv.size() != static_cast<std::size_t>(C) ||
      stats.mean.size() != static_cast<std::size_t>(C) || stats.var.size() != static_cast<std::size_t>(C)) {
    throw ShapeError("channel_norm: gain/shift/stats extents do not match " + std::to_string(C) + " channels");
  }
  const T eps = static_cast<T>(options.eps);
  const double count = static_cast<double>(N) * plane;

  std::vector<T> mean(C), inv_std(C);
  const bool batch_stats = mode != NormMode::kEval;
  for (int c = 0; c < C; ++c) {
    double m, v;
    if (batch_stats) {
      double s = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = xv.data().data() + xv.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      m = s / count;
      double ss = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = xv.data().data() + xv.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - m) * (p[i] - m);
      }
      v = ss / count;
      if (mode == NormMode::kTrain) {
        const double mom = options.momentum;
        stats.mean[c] = static_cast<T>((1 - mom) * stats.mean[c] + mom * m);
        stats.var[c] = static_cast<T>((1 - mom) * stats.var[c] + mom * v);
      } else {
        const double k = stats.calibration_batches;
        stats.mean[c] = static_cast<T>((k * stats.mean[c] + m) / (k + 1));
        stats.var[c] = static_cast<T>((k * stats.var[c] + v) / (k + 1));
      }
    } else {
      m = stats.mean[c];
      v = stats.var[c];
    }
    mean[c] = static_cast<T>(m);
    inv_std[c] = static_cast<T>(1.0 / std::sqrt(v + eps));
  }
  if (mode == NormMode::kCalibrate) ++stats.calibration_batches;

  Tensor<T> out(xv.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t off = xv.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        out[off + i] = gv[c] * (xv[off + i] - mean[c]) * inv_std[c] + sv[c];
      }
    }

  return tape.record("channel_norm", std::move(out), {x, gain, shift},
                     [x, gain, shift, mean, inv_std, batch_stats, plane, count](Tape<T>& t, Var self) {
                       const Tensor<T>& xv = t.value(x);
                       const Tensor<T>& gv = t.value(gain);
                       const Tensor<T>& d = t.grad(self);
                       const int N = xv.n(), C = xv.c();
                       const bool need_x = t.requires_grad(x);
                       Tensor<T>* dgain = t.requires_grad(gain) ? &t.grad_buffer(gain) : nullptr;
                       Tensor<T>* dshift = t.requires_grad(shift) ? &t.grad_buffer(shift) : nullptr;
                       Tensor<T>* dx = need_x ? &t.grad_buffer(x) : nullptr;
                       for (int c = 0; c < C; ++c) {
                         double sum_d = 0, sum_dxhat = 0;
                         for (int n = 0; n < N; ++n) {
                           const std::size_t off = xv.offset(n, c, 0, 0);
                           for (std::size_t i = 0; i < plane; ++i) {
                             const double xhat = (xv[off + i] - mean[c]) * inv_std[c];
                             sum_d += d[off + i];
                             sum_dxhat += d[off + i] * xhat;
                           }
                         }
                         if (dgain) (*dgain)[c] += static_cast<T>(sum_dxhat);
                         if (dshift) (*dshift)[c] += static_cast<T>(sum_d);
                         if (!dx) continue;
                         const double scale = static_cast<double>(gv[c]) * inv_std[c];
                         const double mean_d = sum_d / count;
                         const double mean_dxhat = sum_dxhat / count;
                         for (int n = 0; n < N; ++n) {
                           const std::size_t off = xv.offset(n, c, 0, 0);
                           for (std::size_t i = 0; i < plane; ++i) {
                             if (batch_stats) {
                               const double xhat = (xv[off + i] - mean[c]) * inv_std[c];
                               (*dx)[off + i] += static_cast<T>(scale * (d[off + i] - mean_d - xhat * mean_dxhat));
                             } else {
                               (*dx)[off + i] += static_cast<T>(scale * d[off + i]);
                             }
                           }
                         }
                       }
                     });
}

template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_rank4(av.shape(), "concat_channels");
  require_rank4(bv.shape(), "concat_channels");
  if (av.n() != bv.n() || av.h() != bv.h() || av.w() != bv.w()) {
    throw ShapeError("concat_channels: " + dims(av.shape()) + " and " + dims(bv.shape()) + " differ outside channels");
  }
  const int N = av.n(), Ca = av.c(), Cb = bv.c();
  const std::size_t plane = static_cast<std::size_t>(av.h()) * av.w();
  Tensor<T> out(Shape{N, Ca + Cb, av.h(), av.w()});
  for (int n = 0; n < N; ++n) {
    std::copy_n(av.data().data() + av.offset(n, 0, 0, 0), Ca * plane, out.data().data() + out.offset(n, 0, 0, 0));
    std::copy_n(bv.data().data() + bv.offset(n, 0, 0, 0), Cb * plane, out.data().data() + out.offset(n, Ca, 0, 0));
  }
  return tape.record("concat_channels", std::move(out), {a, b}, [a, b, N, Ca, Cb, plane](Tape<T>& t, Var self) {
    const Tensor<T>& d = t.grad(self);
    const std::size_t per = static_cast<std::size_t>(Ca + Cb) * plane;
    if (t.requires_grad(a)) {
      Tensor<T>& da = t.grad_buffer(a);
      for (int n = 0; n < N; ++n)
        for (std::size_t i = 0; i < Ca * plane; ++i) da[n * Ca * plane + i] += d[n * per + i];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& db = t.grad_buffer(b);
      for (int n = 0; n < N; ++n)
        for (std::size_t i = 0; i < Cb * plane; ++i) db[n * Cb * plane + i] += d[n * per + Ca * plane + i];
    }
  });
}

template <typename T>
Var stack_batch(Tape<T>& tape, std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("stack_batch: no inputs");
  const Shape first = tape.value(parts[0]).shape();
  require_rank4(first, "stack_batch");
  int total = 0;
  for (Var p : parts) {
    const Shape& s = tape.value(p).shape();
    require_rank4(s, "stack_batch");
    if (s[1] != first[1] || s[2] != first[2] || s[3] != first[3]) {
      throw ShapeError("stack_batch: " + dims(s) + " does not match " + dims(first));
    }
    total += s[0];
  }
  Tensor<T> out(Shape{total, first[1], first[2], first[3]});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor<T>& v = tape.value(p);
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + off);
    off += v.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record("stack_batch", std::move(out), inputs, [inputs](Tape<T>& t, Var self) {
    const Tensor<T>& d = t.grad(self);
    std::size_t off = 0;
    for (Var p : inputs) {
      const std::size_t n = t.value(p).size();
      if (t.requires_grad(p)) {
        Tensor<T>& dp = t.grad_buffer(p);
        for (std::size_t i = 0; i < n; ++i) dp[i] += d[off + i];
      }
      off += n;
    }
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var b) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  const Tensor<T>& bv = tape.value(b);
  if (xv.shape().rank() != 2 || wv.shape().rank() != 2 || bv.shape().rank() != 1 ||
      xv.shape()[1] != wv.shape()[1] || bv.shape()[0] != wv.shape()[0]) {
    throw ShapeError("linear: incompatible shapes x " + dims(xv.shape()) + ", w " + dims(wv.shape()) + ", b " +
                     dims(bv.shape()));
  }
  const int N = xv.shape()[0], in = xv.shape()[1], outn = wv.shape()[0];
  Tensor<T> out(Shape{N, outn});
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < outn; ++o) {
      out[n * outn + o] = bv[o] + kernels::dot(wv.data().data() + o * in, xv.data().data() + n * in, in);
    }
  return tape.record("linear", std::move(out), {x, w, b}, [x, w, b, N, in, outn](Tape<T>& t, Var self) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    const Tensor<T>& d = t.grad(self);
    if (t.requires_grad(b)) {
      Tensor<T>& db = t.grad_buffer(b);
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < outn; ++o) db[o] += d[n * outn + o];
    }
    if (t.requires_grad(w)) {
      Tensor<T>& dw = t.grad_buffer(w);
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < outn; ++o)
          kernels::axpy(d[n * outn + o], xv.data().data() + n * in, dw.data().data() + o * in, in);
    }
    if (t.requires_grad(x)) {
      Tensor<T>& dx = t.grad_buffer(x);
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < outn; ++o)
          kernels::axpy(d[n * outn + o], wv.data().data() + o * in, dx.data().data() + n * in, in);
    }
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  Tensor<T> out = tape.value(x).reshaped(shape);
  return tape.record("reshape", std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const Tensor<T>& d = t.grad(self);
    Tensor<T>& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i];
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_same(av.shape(), bv.shape(), "add");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return tape.record("add", std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const Tensor<T>& d = t.grad(self);
    for (Var in : {a, b}) {
      if (!t.requires_grad(in)) continue;
      Tensor<T>& g = t.grad_buffer(in);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i];
    }
  });
}

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_same(av.shape(), bv.shape(), "sub");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return tape.record("sub", std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const Tensor<T>& d = t.grad(self);
    if (t.requires_grad(a)) {
      Tensor<T>& g = t.grad_buffer(a);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& g = t.grad_buffer(b);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] -= d[i];
    }
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_same(av.shape(), bv.shape(), "mul");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record("mul", std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const Tensor<T>& d = t.grad(self);
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor<T>& g = t.grad_buffer(a);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& g = t.grad_buffer(b);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i] * av[i];
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * xv[i];
  return tape.record("scale", std::move(out), {x}, [x, factor](Tape<T>& t, Var self) {
    const Tensor<T>& d = t.grad(self);
    Tensor<T>& g = t.grad_buffer(x);
    for (std::size_t i = 0; i < d.size(); ++i) g[i] += factor * d[i];
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  double s = 0;
  for (T v : xv.data()) s += v;
  return tape.record("sum", Tensor<T>(Shape{1}, static_cast<T>(s)), {x}, [x](Tape<T>& t, Var self) {
    const T d = t.grad(self)[0];
    for (auto& g : t.grad_buffer(x).data()) g += d;
  });
}

template <typename T>
Var mean_abs(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  double s = 0;
  for (T v : xv.data()) s += std::abs(v);
  const double n = static_cast<double>(xv.size());
  return tape.record("mean_abs", Tensor<T>(Shape{1}, static_cast<T>(s / n)), {x}, [x, n](Tape<T>& t, Var self) {
    const T d = static_cast<T>(t.grad(self)[0] / n);
    const Tensor<T>& xv = t.value(x);
    Tensor<T>& g = t.grad_buffer(x);
    for (std::size_t i = 0; i < xv.size(); ++i) g[i] += xv[i] > 0 ? d : (xv[i] < 0 ? -d : T{0});
  });
}

template <typename T>
Var mean_square(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  double s = 0;
  for (T v : xv.data()) s += static_cast<double>(v) * v;
  const double n = static_cast<double>(xv.size());
  return tape.record("mean_square", Tensor<T>(Shape{1}, static_cast<T>(s / n)), {x}, [x, n](Tape<T>& t, Var self) {
    const T d = static_cast<T>(2.0 * t.grad(self)[0] / n);
    const Tensor<T>& xv = t.value(x);
    Tensor<T>& g = t.grad_buffer(x);
    for (std::size_t i = 0; i < xv.size(); ++i) g[i] += d * xv[i];
  });
}

template <typename T>
Var sum_square(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  double s = 0;
  for (T v : xv.data()) s += static_cast<double>(v) * v;
  return tape.record("sum_square", Tensor<T>(Shape{1}, static_cast<T>(s)), {x}, [x](Tape<T>& t, Var self) {
    const T d = 2 * t.grad(self)[0];
    const Tensor<T>& xv = t.value(x);
    Tensor<T>& g = t.grad_buffer(x);
    for (std::size_t i = 0; i < xv.size(); ++i) g[i] += d * xv[i];
  });
}

template <typename T>
Var weighted_sum(Tape<T>& tape, std::span<const Var> scalars, std::span<const T> weights) {
  if (scalars.size() != weights.size()) throw ContractError("weighted_sum: operand/weight count mismatch");
  double s = 0;
  for (std::size_t k = 0; k < scalars.size(); ++k) s += static_cast<double>(weights[k]) * tape.scalar(scalars[k]);
  std::vector<Var> inputs(scalars.begin(), scalars.end());
  std::vector<T> w(weights.begin(), weights.end());
  return tape.record("weighted_sum", Tensor<T>(Shape{1}, static_cast<T>(s)), inputs,
                     [inputs, w](Tape<T>& t, Var self) {
                       const T d = t.grad(self)[0];
                       for (std::size_t k = 0; k < inputs.size(); ++k) {
                         if (t.requires_grad(inputs[k])) t.grad_buffer(inputs[k])[0] += w[k] * d;
                       }
                     });
}

template <typename T>
Var masked_mean_square(Tape<T>& tape, Var x, Var y, const Tensor<T>& mask) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& yv = tape.value(y);
  require_same(xv.shape(), yv.shape(), "masked_mean_square");
  require_rank4(xv.shape(), "masked_mean_square");
  if (mask.shape() != Shape{xv.h(), xv.w()}) {
    throw ShapeError("masked_mean_square: mask " + dims(mask.shape()) + " does not match image " + dims(xv.shape()));
  }
  const std::size_t plane = mask.size();
  std::size_t known = 0;
  for (T m : mask.data()) known += m != T{0};
  const double count = static_cast<double>(known) * xv.n() * xv.c();
  double s = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (mask[i % plane] == T{0}) continue;
    const double d = static_cast<double>(xv[i]) - yv[i];
    s += d * d;
  }
  const T value = count > 0 ? static_cast<T>(s / count) : T{0};
  return tape.record("masked_mean_square", Tensor<T>(Shape{1}, value), {x, y},
                     [x, y, mask, plane, count](Tape<T>& t, Var self) {
                       if (count == 0) return;
                       const T d = static_cast<T>(2.0 * t.grad(self)[0] / count);
                       const Tensor<T>& xv = t.value(x);
                       const Tensor<T>& yv = t.value(y);
                       Tensor<T>* dx = t.requires_grad(x) ? &t.grad_buffer(x) : nullptr;
                       Tensor<T>* dy = t.requires_grad(y) ? &t.grad_buffer(y) : nullptr;
                       for (std::size_t i = 0; i < xv.size(); ++i) {
                         if (mask[i % plane] == T{0}) continue;
                         const T g = d * (xv[i] - yv[i]);
                         if (dx) (*dx)[i] += g;
                         if (dy) (*dy)[i] -= g;
                       }
                     });
}

#define LCMKIT_INSTANTIATE_OPS(T)                                                                    \
  template Var conv2d<T>(Tape<T>&, Var, Var, Var, int, int);                                         \
  template Var upsample_nearest<T>(Tape<T>&, Var, int);                                              \
  template Var expand2_to<T>(Tape<T>&, Var, int, int);                                               \
  template Var upsample_conv<T>(Tape<T>&, Var, Var, Var, int);                                       \
  template Var leaky_relu<T>(Tape<T>&, Var, T);                                                      \
  template Var sigmoid<T>(Tape<T>&, Var);                                                            \
  template Var channel_norm<T>(Tape<T>&, Var, Var, Var, NormStats<T>&, NormMode, NormOptions);       \
  template Var concat_channels<T>(Tape<T>&, Var, Var);                                               \
  template Var stack_batch<T>(Tape<T>&, std::span<const Var>);                                       \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                                   \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                                     \
  template Var add<T>(Tape<T>&, Var, Var);                                                           \
  template Var sub<T>(Tape<T>&, Var, Var);                                                           \
  template Var mul<T>(Tape<T>&, Var, Var);                                                           \
  template Var scale<T>(Tape<T>&, Var, T);                                                           \
  template Var sum<T>(Tape<T>&, Var);                                                                \
  template Var mean_abs<T>(Tape<T>&, Var);                                                           \
  template Var mean_square<T>(Tape<T>&, Var);                                                        \
  template Var sum_square<T>(Tape<T>&, Var);                                                         \
  template Var weighted_sum<T>(Tape<T>&, std::span<const Var>, std::span<const T>);                  \
  template Var masked_mean_square<T>(Tape<T>&, Var, Var, const Tensor<T>&);

LCMKIT_INSTANTIATE_OPS(float)
LCMKIT_INSTANTIATE_OPS(double)

}  // namespace lcm::ops
