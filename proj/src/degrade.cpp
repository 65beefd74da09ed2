#include "lcm/degrade.hpp"

#include <array>
#include <cmath>
#include <numeric>

#include "lcm/ops.hpp"
#include "lcm/rng.hpp"

namespace lcm {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kLobes = 3;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

// out[o] = sum_i w[o][i] * in[i] along one axis of every plane.
template <typename T>
Tensor<T> apply_axis(const Tensor<T>& x, const std::vector<double>& wmat, int out_n, bool along_w) {
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const int in_n = along_w ? W : H;
  Tensor<T> out(along_w ? Shape{N, C, H, out_n} : Shape{N, C, out_n, W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      if (along_w) {
        for (int y = 0; y < H; ++y)
          for (int o = 0; o < out_n; ++o) {
            double s = 0;
            for (int i = 0; i < in_n; ++i) s += wmat[o * in_n + i] * x.at(n, c, y, i);
            out.at(n, c, y, o) = static_cast<T>(s);
          }
      } else {
        for (int o = 0; o < out_n; ++o)
          for (int xx = 0; xx < W; ++xx) {
            double s = 0;
            for (int i = 0; i < in_n; ++i) s += wmat[o * in_n + i] * x.at(n, c, i, xx);
            out.at(n, c, o, xx) = static_cast<T>(s);
          }
      }
    }
  return out;
}

// Adjoint of apply_axis, accumulated into dx.
template <typename T>
void apply_axis_adjoint(const Tensor<T>& d, const std::vector<double>& wmat, int in_n, bool along_w, Tensor<T>& dx) {
  const int N = d.n(), C = d.c();
  const int out_n = along_w ? d.w() : d.h();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      if (along_w) {
        for (int y = 0; y < d.h(); ++y)
          for (int o = 0; o < out_n; ++o) {
            const double g = d.at(n, c, y, o);
            for (int i = 0; i < in_n; ++i) dx.at(n, c, y, i) += static_cast<T>(wmat[o * in_n + i] * g);
          }
      } else {
        for (int o = 0; o < out_n; ++o)
          for (int xx = 0; xx < d.w(); ++xx) {
            const double g = d.at(n, c, o, xx);
            for (int i = 0; i < in_n; ++i) dx.at(n, c, i, xx) += static_cast<T>(wmat[o * in_n + i] * g);
          }
      }
    }
}

}  // namespace

Side parse_side(const std::string& name) {
  if (name == "left") return Side::kLeft;
  if (name == "right") return Side::kRight;
  if (name == "top") return Side::kTop;
  if (name == "bottom") return Side::kBottom;
  throw ContractError("unknown half-mask side '" + name + "'");
}

Mask full_mask(int h, int w) { return Mask(Shape{h, w}, 1.0f); }

Mask center_mask(int h, int w, int hole_h, int hole_w) {
  if (hole_h < 0 || hole_w < 0 || hole_h > h || hole_w > w) {
    throw ContractError("center hole " + std::to_string(hole_h) + "x" + std::to_string(hole_w) +
                        " does not fit a " + std::to_string(h) + "x" + std::to_string(w) + " image");
  }
  Mask m = full_mask(h, w);
  const int top = (h - hole_h) / 2;
  const int left = (w - hole_w) / 2;
  for (int y = top; y < top + hole_h; ++y)
    for (int x = left; x < left + hole_w; ++x) m[y * w + x] = 0.0f;
  return m;
}

Mask half_mask(int h, int w, Side side) {
  Mask m = full_mask(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool hole = false;
      switch (side) {
        case Side::kLeft: hole = x < w / 2; break;
        case Side::kRight: hole = x >= w / 2; break;
        case Side::kTop: hole = y < h / 2; break;
        case Side::kBottom: hole = y >= h / 2; break;
      }
      if (hole) m[y * w + x] = 0.0f;
    }
  return m;
}

Mask random_mask(int h, int w, double missing_fraction, std::uint64_t seed) {
  if (!(missing_fraction >= 0.0 && missing_fraction <= 1.0)) {
    throw ContractError("random mask fraction must lie in [0, 1]");
  }
  const std::size_t total = static_cast<std::size_t>(h) * w;
  const auto drop = static_cast<std::size_t>(std::llround(missing_fraction * static_cast<double>(total)));
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  // partial Fisher-Yates: the first `drop` slots are a uniform sample
  for (std::size_t i = 0; i < drop; ++i) {
    const std::size_t j = i + rng.below(total - i);
    std::swap(idx[i], idx[j]);
  }
  Mask m = full_mask(h, w);
  for (std::size_t i = 0; i < drop; ++i) m[idx[i]] = 0.0f;
  return m;
}

std::size_t count_zeros(const Mask& m) {
  return static_cast<std::size_t>(std::count(m.data().begin(), m.data().end(), 0.0f));
}

std::string task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kInpaint: return "inpaint";
    case TaskKind::kSuperres: return "sr";
    case TaskKind::kColorize: return "color";
  }
  return "unknown";
}

TaskKind parse_task(const std::string& name) {
  if (name == "inpaint") return TaskKind::kInpaint;
  if (name == "sr" || name == "superres") return TaskKind::kSuperres;
  if (name == "color" || name == "colorize") return TaskKind::kColorize;
  throw ContractError("unknown task '" + name + "' (expected inpaint|sr|color)");
}

DegradationSpec DegradationSpec::inpaint(Mask mask, double lambda) {
  DegradationSpec s;
  s.kind = TaskKind::kInpaint;
  s.mask = std::move(mask);
  s.latent_penalty = lambda;
  s.validate();
  return s;
}

DegradationSpec DegradationSpec::identity(int h, int w, double lambda) { return inpaint(full_mask(h, w), lambda); }

DegradationSpec DegradationSpec::superres(int factor, double lambda) {
  DegradationSpec s;
  s.kind = TaskKind::kSuperres;
  s.factor = factor;
  s.latent_penalty = lambda;
  s.validate();
  return s;
}

DegradationSpec DegradationSpec::colorize(double lambda) {
  DegradationSpec s;
  s.kind = TaskKind::kColorize;
  s.latent_penalty = lambda;
  s.validate();
  return s;
}

void DegradationSpec::validate() const {
  if (!(latent_penalty >= 0.0)) throw ContractError("latent penalty must be >= 0");
  switch (kind) {
    case TaskKind::kInpaint:
      if (mask.shape().rank() != 2) throw ContractError("inpainting needs an H x W mask");
      for (float v : mask.data()) {
        if (v != 0.0f && v != 1.0f) throw ContractError("mask entries must be exactly 0 or 1");
      }
      break;
    case TaskKind::kSuperres:
      if (factor != 2 && factor != 4 && factor != 8) {
        throw ContractError("superresolution factor must be 2, 4 or 8, got " + std::to_string(factor));
      }
      break;
    case TaskKind::kColorize: break;
  }
}

Shape DegradationSpec::observed_shape(const Shape& image) const {
  require_rank4(image, "degradation input");
  switch (kind) {
    case TaskKind::kInpaint:
      if (mask.shape() != Shape{image[2], image[3]}) {
        throw ShapeError("mask " + mask.shape().str() + " does not match image " + image.str());
      }
      return image;
    case TaskKind::kSuperres:
      if (image[2] % factor || image[3] % factor) {
        throw ShapeError("image " + image.str() + " is not divisible by factor " + std::to_string(factor));
      }
      return Shape{image[0], image[1], image[2] / factor, image[3] / factor};
    case TaskKind::kColorize:
      if (image[1] != 3) throw ShapeError("colorization needs a 3-channel image, got " + image.str());
      return Shape{image[0], 1, image[2], image[3]};
  }
  return image;
}

double lanczos_kernel(double t) {
  if (std::abs(t) >= kLobes) return 0.0;
  return sinc(t) * sinc(t / kLobes);
}

std::vector<double> lanczos_weights(int n, int factor) {
  if (factor < 1) throw ContractError("lanczos factor must be >= 1");
  if (n % factor) throw ShapeError("extent " + std::to_string(n) + " is not divisible by " + std::to_string(factor));
  const int out_n = n / factor;
  std::vector<double> w(static_cast<std::size_t>(out_n) * n, 0.0);
  const double support = static_cast<double>(kLobes) * factor;
  for (int o = 0; o < out_n; ++o) {
    const double center = (o + 0.5) * factor - 0.5;
    const int lo = static_cast<int>(std::ceil(center - support));
    const int hi = static_cast<int>(std::floor(center + support));
    double total = 0.0;
    for (int i = lo; i <= hi; ++i) total += lanczos_kernel((i - center) / factor);
    for (int i = lo; i <= hi; ++i) {
      w[o * n + reflect_index(i, n)] += lanczos_kernel((i - center) / factor) / total;
    }
  }
  return w;
}

namespace ops {

template <typename T>
Var lanczos_down(Tape<T>& tape, Var x, int factor) {
  const Tensor<T>& xv = tape.value(x);
  require_rank4(xv.shape(), "lanczos_down");
  const int H = xv.h(), W = xv.w();
  if (factor < 1 || H % factor || W % factor) {
    throw ShapeError("lanczos_down: " + xv.shape().str() + " is not divisible by factor " + std::to_string(factor));
  }
  auto wx = lanczos_weights(W, factor);
  auto wy = lanczos_weights(H, factor);
  Tensor<T> out = apply_axis(apply_axis(xv, wx, W / factor, true), wy, H / factor, false);
  return tape.record("lanczos_down", std::move(out), {x}, [x, wx, wy, H, W, factor](Tape<T>& t, Var self) {
    const Tensor<T>& d = t.grad(self);
    Tensor<T> mid(Shape{d.n(), d.c(), H, W / factor});
    apply_axis_adjoint(d, wy, H, false, mid);
    apply_axis_adjoint(mid, wx, W, true, t.grad_buffer(x));
  });
}

template <typename T>
Var to_gray(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  require_rank4(xv.shape(), "to_gray");
  if (xv.c() != 3) throw ShapeError("to_gray: expected 3 channels, got " + xv.shape().str());
  Tensor<T> out(Shape{xv.n(), 1, xv.h(), xv.w()});
  for (int n = 0; n < xv.n(); ++n)
    for (int y = 0; y < xv.h(); ++y)
      for (int xx = 0; xx < xv.w(); ++xx) {
        out.at(n, 0, y, xx) = (xv.at(n, 0, y, xx) + xv.at(n, 1, y, xx) + xv.at(n, 2, y, xx)) / T{3};
      }
  return tape.record("to_gray", std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const Tensor<T>& d = t.grad(self);
    Tensor<T>& dx = t.grad_buffer(x);
    for (int n = 0; n < d.n(); ++n)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < d.h(); ++y)
          for (int xx = 0; xx < d.w(); ++xx) dx.at(n, c, y, xx) += d.at(n, 0, y, xx) / T{3};
  });
}

template <typename T>
Var degrade(Tape<T>& tape, Var x, const DegradationSpec& spec) {
  switch (spec.kind) {
    case TaskKind::kInpaint: {
      const Tensor<T>& xv = tape.value(x);
      spec.observed_shape(xv.shape());
      Tensor<T> m(xv.shape());
      const std::size_t plane = spec.mask.size();
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<T>(spec.mask[i % plane]);
      return mul(tape, x, tape.constant(std::move(m)));
    }
    case TaskKind::kSuperres: return lanczos_down(tape, x, spec.factor);
    case TaskKind::kColorize: return to_gray(tape, x);
  }
  throw ContractError("unknown degradation");
}

template <typename T>
EnergyTerms<T> energy(Tape<T>& tape, Var x, Var y, const DegradationSpec& spec, Var latent_norm_sq) {
  const Shape& xs = tape.value(x).shape();
  const Shape expected = spec.observed_shape(xs);
  if (!(tape.value(y).shape() == expected)) {
    throw ShapeError("observation " + tape.value(y).shape().str() + " does not match expected " + expected.str());
  }
  EnergyTerms<T> terms;
  std::vector<Var> parts;
  std::vector<T> weights;
  if (spec.kind == TaskKind::kInpaint) {
    Tensor<T> mask(spec.mask.shape());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = static_cast<T>(spec.mask[i]);
    terms.empty_mask = count_zeros(spec.mask) == spec.mask.size();
    terms.data_term = masked_mean_square(tape, x, y, mask);
    if (spec.pyramid_term) {
      parts.push_back(lap_l1(tape, degrade(tape, x, spec), degrade(tape, y, spec), PyramidSpec::default_for(xs[2], xs[3])));
      weights.push_back(T{1});
    }
  } else {
    Var dx = degrade(tape, x, spec);
    terms.data_term = mean_square(tape, sub(tape, dx, y));
    if (spec.pyramid_term) {
      parts.push_back(lap_l1(tape, dx, y, PyramidSpec::default_for(expected[2], expected[3])));
      weights.push_back(T{1});
    }
  }
  parts.insert(parts.begin(), terms.data_term);
  weights.insert(weights.begin(), T{1});
  if (latent_norm_sq.valid()) {
    parts.push_back(latent_norm_sq);
    weights.push_back(static_cast<T>(spec.latent_penalty));
  }
  terms.total = weighted_sum<T>(tape, parts, weights);
  return terms;
}

#define LCMKIT_INSTANTIATE_DEGRADE(T)                                                      \
  template Var lanczos_down<T>(Tape<T>&, Var, int);                                        \
  template Var to_gray<T>(Tape<T>&, Var);                                                  \
  template Var degrade<T>(Tape<T>&, Var, const DegradationSpec&);                          \
  template EnergyTerms<T> energy<T>(Tape<T>&, Var, Var, const DegradationSpec&, Var);

LCMKIT_INSTANTIATE_DEGRADE(float)
LCMKIT_INSTANTIATE_DEGRADE(double)

}  // namespace ops

template <typename T>
Tensor<T> lanczos_down(const Tensor<T>& x, int factor) {
  Tape<T> tape;
  return tape.value(ops::lanczos_down(tape, tape.constant(x), factor));
}

template <typename T>
Tensor<T> to_gray(const Tensor<T>& x) {
  Tape<T> tape;
  return tape.value(ops::to_gray(tape, tape.constant(x)));
}

template <typename T>
Tensor<T> degrade(const Tensor<T>& x, const DegradationSpec& spec) {
  Tape<T> tape;
  return tape.value(ops::degrade(tape, tape.constant(x), spec));
}

template Tensor<float> lanczos_down(const Tensor<float>&, int);
template Tensor<double> lanczos_down(const Tensor<double>&, int);
template Tensor<float> to_gray(const Tensor<float>&);
template Tensor<double> to_gray(const Tensor<double>&);
template Tensor<float> degrade(const Tensor<float>&, const DegradationSpec&);
template Tensor<double> degrade(const Tensor<double>&, const DegradationSpec&);

}  // namespace lcm
