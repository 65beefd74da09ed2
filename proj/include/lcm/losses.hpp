#pragma once

#include <vector>

#include "lcm/tape.hpp"
#include "lcm/tensor.hpp"

namespace lcm {

// Laplacian pyramid configuration. Smoothing is the separable 5-tap binomial
// [1 4 6 4 1] / 16 with reflect (mirror without edge repeat) boundary.
struct PyramidSpec {
  int levels = 1;

  // floor(log2(min(h, w))) - 2, clamped to >= 1.
  static PyramidSpec default_for(int h, int w);
  static int max_levels(int h, int w);
  void validate(int h, int w) const;
};

// Mirror index into [0, n) without repeating the edge sample.
int reflect_index(int i, int n);

namespace ops {

// Smooth then keep even rows/columns; extents become ceil(n / 2).
template <typename T>
Var gaussian_down(Tape<T>& tape, Var x);

// Levels 0..J-2 hold band-pass detail (finest first); level J-1 is the
// low-pass residual.
template <typename T>
std::vector<Var> laplacian_pyramid(Tape<T>& tape, Var x, const PyramidSpec& spec);

// sum_j 2^(-2j) * mean|L^j(x1 - x2)|
template <typename T>
Var lap_l1(Tape<T>& tape, Var x1, Var x2, const PyramidSpec& spec);

// lap_l1 + 1.0 * mean squared error.
template <typename T>
Var combined_loss(Tape<T>& tape, Var x_hat, Var x, const PyramidSpec& spec);

}  // namespace ops

// Non-recording conveniences.
template <typename T>
Tensor<T> gaussian_down(const Tensor<T>& x);
template <typename T>
std::vector<Tensor<T>> laplacian_pyramid(const Tensor<T>& x, const PyramidSpec& spec);
template <typename T>
Tensor<T> reconstruct_pyramid(const std::vector<Tensor<T>>& levels);
template <typename T>
double lap_l1(const Tensor<T>& x1, const Tensor<T>& x2, const PyramidSpec& spec);
template <typename T>
double combined_loss(const Tensor<T>& x_hat, const Tensor<T>& x, const PyramidSpec& spec);

}  // namespace lcm
