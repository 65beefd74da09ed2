#include "lcm/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "lcm/ops.hpp"

namespace lcm {

namespace {

constexpr std::array<double, 5> kBinomial{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

int floor_log2(int v) {
  int r = 0;
  while ((v >> (r + 1)) > 0) ++r;
  return r;
}

// Horizontal smoothing on every row, then vertical smoothing evaluated only
// on even rows; even columns are kept.
template <typename T>
Tensor<T> smooth_subsample(const Tensor<T>& x) {
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  Tensor<T> out(Shape{N, C, Ho, Wo});
  std::vector<double> rows(static_cast<std::size_t>(H) * Wo);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      for (int y = 0; y < H; ++y)
        for (int ox = 0; ox < Wo; ++ox) {
          double s = 0;
          for (int k = 0; k < 5; ++k) s += kBinomial[k] * x.at(n, c, y, reflect_index(2 * ox + k - 2, W));
          rows[y * Wo + ox] = s;
        }
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double s = 0;
          for (int k = 0; k < 5; ++k) s += kBinomial[k] * rows[reflect_index(2 * oy + k - 2, H) * Wo + ox];
          out.at(n, c, oy, ox) = static_cast<T>(s);
        }
    }
  return out;
}

// Adjoint of smooth_subsample.
template <typename T>
void smooth_subsample_adjoint(const Tensor<T>& d, Tensor<T>& dx) {
  const int N = dx.n(), C = dx.c(), H = dx.h(), W = dx.w();
  const int Ho = d.h(), Wo = d.w();
  std::vector<double> rows(static_cast<std::size_t>(H) * Wo);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      std::fill(rows.begin(), rows.end(), 0.0);
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const double g = d.at(n, c, oy, ox);
          for (int k = 0; k < 5; ++k) rows[reflect_index(2 * oy + k - 2, H) * Wo + ox] += kBinomial[k] * g;
        }
      for (int y = 0; y < H; ++y)
        for (int ox = 0; ox < Wo; ++ox) {
          const double g = rows[y * Wo + ox];
          for (int k = 0; k < 5; ++k) dx.at(n, c, y, reflect_index(2 * ox + k - 2, W)) += static_cast<T>(kBinomial[k] * g);
        }
    }
}

}  // namespace

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

int PyramidSpec::max_levels(int h, int w) { return floor_log2(std::min(h, w)); }

PyramidSpec PyramidSpec::default_for(int h, int w) { return PyramidSpec{std::max(1, max_levels(h, w) - 2)}; }

void PyramidSpec::validate(int h, int w) const {
  if (levels < 1) throw ContractError("pyramid needs at least one level");
  if (levels > 1 && levels > max_levels(h, w)) {
    throw ContractError("pyramid of " + std::to_string(levels) + " levels is too deep for " + std::to_string(h) + "x" +
                        std::to_string(w) + " (max " + std::to_string(max_levels(h, w)) + ")");
  }
}

namespace ops {

template <typename T>
Var gaussian_down(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  require_rank4(xv.shape(), "gaussian_down");
  if (xv.h() < 2 || xv.w() < 2) throw GeometryError("gaussian_down: extents must be >= 2, got " + xv.shape().str());
  return tape.record("gaussian_down", smooth_subsample(xv), {x}, [x](Tape<T>& t, Var self) {
    smooth_subsample_adjoint(t.grad(self), t.grad_buffer(x));
  });
}

template <typename T>
std::vector<Var> laplacian_pyramid(Tape<T>& tape, Var x, const PyramidSpec& spec) {
  const Tensor<T>& xv = tape.value(x);
  require_rank4(xv.shape(), "laplacian_pyramid");
  spec.validate(xv.h(), xv.w());
  std::vector<Var> levels;
  Var current = x;
  for (int j = 0; j + 1 < spec.levels; ++j) {
    Var down = gaussian_down(tape, current);
    const Shape& s = tape.value(current).shape();
    Var up = expand2_to(tape, down, s[2], s[3]);
    levels.push_back(sub(tape, current, up));
    current = down;
  }
  levels.push_back(current);
  return levels;
}

template <typename T>
Var lap_l1(Tape<T>& tape, Var x1, Var x2, const PyramidSpec& spec) {
  Var diff = sub(tape, x1, x2);
  std::vector<Var> levels = laplacian_pyramid(tape, diff, spec);
  std::vector<Var> terms;
  std::vector<T> weights;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    terms.push_back(mean_abs(tape, levels[j]));
    weights.push_back(static_cast<T>(std::ldexp(1.0, -2 * static_cast<int>(j))));
  }
  return weighted_sum<T>(tape, terms, weights);
}

template <typename T>
Var combined_loss(Tape<T>& tape, Var x_hat, Var x, const PyramidSpec& spec) {
  Var lap = lap_l1(tape, x_hat, x, spec);
  Var mse = mean_square(tape, sub(tape, x_hat, x));
  const std::array<Var, 2> terms{lap, mse};
  const std::array<T, 2> weights{T{1}, T{1}};
  return weighted_sum<T>(tape, terms, weights);
}

template Var gaussian_down<float>(Tape<float>&, Var);
template Var gaussian_down<double>(Tape<double>&, Var);
template std::vector<Var> laplacian_pyramid<float>(Tape<float>&, Var, const PyramidSpec&);
template std::vector<Var> laplacian_pyramid<double>(Tape<double>&, Var, const PyramidSpec&);
template Var lap_l1<float>(Tape<float>&, Var, Var, const PyramidSpec&);
template Var lap_l1<double>(Tape<double>&, Var, Var, const PyramidSpec&);
template Var combined_loss<float>(Tape<float>&, Var, Var, const PyramidSpec&);
template Var combined_loss<double>(Tape<double>&, Var, Var, const PyramidSpec&);

}  // namespace ops

template <typename T>
Tensor<T> gaussian_down(const Tensor<T>& x) {
  Tape<T> tape;
  return tape.value(ops::gaussian_down(tape, tape.constant(x)));
}

template <typename T>
std::vector<Tensor<T>> laplacian_pyramid(const Tensor<T>& x, const PyramidSpec& spec) {
  Tape<T> tape;
  std::vector<Tensor<T>> out;
  for (Var v : ops::laplacian_pyramid(tape, tape.constant(x), spec)) out.push_back(tape.value(v));
  return out;
}

template <typename T>
Tensor<T> reconstruct_pyramid(const std::vector<Tensor<T>>& levels) {
  if (levels.empty()) throw ContractError("reconstruct_pyramid: no levels");
  Tensor<T> current = levels.back();
  for (std::size_t k = levels.size() - 1; k-- > 0;) {
    const Tensor<T>& band = levels[k];
    Tensor<T> next(band.shape());
    for (int n = 0; n < band.n(); ++n)
      for (int c = 0; c < band.c(); ++c)
        for (int y = 0; y < band.h(); ++y)
          for (int x = 0; x < band.w(); ++x) next.at(n, c, y, x) = band.at(n, c, y, x) + current.at(n, c, y / 2, x / 2);
    current = std::move(next);
  }
  return current;
}

template <typename T>
double lap_l1(const Tensor<T>& x1, const Tensor<T>& x2, const PyramidSpec& spec) {
  Tape<T> tape;
  return tape.scalar(ops::lap_l1(tape, tape.constant(x1), tape.constant(x2), spec));
}

template <typename T>
double combined_loss(const Tensor<T>& x_hat, const Tensor<T>& x, const PyramidSpec& spec) {
  Tape<T> tape;
  return tape.scalar(ops::combined_loss(tape, tape.constant(x_hat), tape.constant(x), spec));
}

template Tensor<float> gaussian_down(const Tensor<float>&);
template Tensor<double> gaussian_down(const Tensor<double>&);
template std::vector<Tensor<float>> laplacian_pyramid(const Tensor<float>&, const PyramidSpec&);
template std::vector<Tensor<double>> laplacian_pyramid(const Tensor<double>&, const PyramidSpec&);
template Tensor<float> reconstruct_pyramid(const std::vector<Tensor<float>>&);
template Tensor<double> reconstruct_pyramid(const std::vector<Tensor<double>>&);
template double lap_l1(const Tensor<float>&, const Tensor<float>&, const PyramidSpec&);
template double lap_l1(const Tensor<double>&, const Tensor<double>&, const PyramidSpec&);
template double combined_loss(const Tensor<float>&, const Tensor<float>&, const PyramidSpec&);
template double combined_loss(const Tensor<double>&, const Tensor<double>&, const PyramidSpec&);

}  // namespace lcm
