#pragma once

#include <cstdint>
#include <string>

#include "lcm/losses.hpp"
#include "lcm/tape.hpp"
#include "lcm/tensor.hpp"

namespace lcm {

// Binary H x W masks: 1 = known pixel, 0 = missing.
using Mask = Tensor<float>;

enum class Side { kLeft, kRight, kTop, kBottom };

Side parse_side(const std::string& name);

Mask center_mask(int h, int w, int hole_h, int hole_w);
Mask half_mask(int h, int w, Side side = Side::kRight);
// Exactly round(fraction * h * w) whole pixels are dropped.
Mask random_mask(int h, int w, double missing_fraction, std::uint64_t seed);
Mask full_mask(int h, int w);
std::size_t count_zeros(const Mask& m);

enum class TaskKind { kInpaint, kSuperres, kColorize };

std::string task_name(TaskKind kind);
TaskKind parse_task(const std::string& name);

// Describes the corruption y = D(x) and thereby the restoration energy E(x|y).
struct DegradationSpec {
  TaskKind kind = TaskKind::kInpaint;
  Mask mask;                    // inpaint only
  int factor = 1;               // superres only; one of 2, 4, 8
  double latent_penalty = 0.0;  // lambda on ||z||^2
  bool pyramid_term = false;    // adds Lap-L1 between D(x) and y

  static DegradationSpec inpaint(Mask mask, double lambda = 0.0);
  static DegradationSpec identity(int h, int w, double lambda = 0.0);
  static DegradationSpec superres(int factor, double lambda = 0.0);
  static DegradationSpec colorize(double lambda = 0.0);

  void validate() const;
  // Shape of y for an image of shape `image`.
  Shape observed_shape(const Shape& image) const;
};

namespace ops {

// Separable Lanczos-3 reduction by an integer factor with reflect boundary;
// taps are renormalized per output position.
template <typename T>
Var lanczos_down(Tape<T>& tape, Var x, int factor);

// Channel average of a 3-channel image.
template <typename T>
Var to_gray(Tape<T>& tape, Var x);

// D(x) for the degradation.
template <typename T>
Var degrade(Tape<T>& tape, Var x, const DegradationSpec& spec);

template <typename T>
struct EnergyTerms {
  Var total;
  Var data_term;
  bool empty_mask = false;
};

// Data term: inpaint -> MSE over known pixels; superres -> MSE(down(x), y);
// colorize -> MSE(gray(x), y). Adds lambda * latent_norm_sq when
// latent_norm_sq is valid.
template <typename T>
EnergyTerms<T> energy(Tape<T>& tape, Var x, Var y, const DegradationSpec& spec, Var latent_norm_sq = {});

}  // namespace ops

// Per-axis Lanczos weights: row o of the (n / factor) x n matrix.
std::vector<double> lanczos_weights(int n, int factor);
double lanczos_kernel(double t);

template <typename T>
Tensor<T> lanczos_down(const Tensor<T>& x, int factor);
template <typename T>
Tensor<T> to_gray(const Tensor<T>& x);
template <typename T>
Tensor<T> degrade(const Tensor<T>& x, const DegradationSpec& spec);

}  // namespace lcm
