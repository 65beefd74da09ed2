#pragma once

#include <span>

#include "lcm/tape.hpp"
#include "lcm/tensor.hpp"

// Differentiable primitives. Every function evaluates eagerly, records the
// result on the tape and returns its handle.
namespace lcm::ops {

// Cross-correlation. x: N x Ci x H x W, w: Co x Ci x kh x kw, b: Co.
// Output extent: floor((in + 2*padding - k) / stride) + 1.
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var b, int stride, int padding);

// Nearest-neighbour replication by an integer factor.
template <typename T>
Var upsample_nearest(Tape<T>& tape, Var x, int scale);

// Nearest 2x expansion cropped to (h, w); source index is i / 2.
template <typename T>
Var expand2_to(Tape<T>& tape, Var x, int h, int w);

// Nearest upsample by `scale`, then a size-preserving convolution.
template <typename T>
Var upsample_conv(Tape<T>& tape, Var x, Var w, Var b, int scale);

template <typename T>
Var leaky_relu(Tape<T>& tape, Var x, T slope);

template <typename T>
Var sigmoid(Tape<T>& tape, Var x);

enum class NormMode {
  kTrain,      // batch statistics, running stats updated with momentum
  kEval,       // running statistics
  kCalibrate,  // batch statistics, running stats set to a cumulative average
};

template <typename T>
struct NormStats {
  Tensor<T> mean;
  Tensor<T> var;
  int calibration_batches = 0;

  NormStats() = default;
  explicit NormStats(int channels) : mean(Shape{channels}, T{0}), var(Shape{channels}, T{1}) {}
};

struct NormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

// Per-channel normalization followed by gain/shift. Statistics are taken
// over batch and spatial positions. Variances are the biased estimate.
template <typename T>
Var channel_norm(Tape<T>& tape, Var x, Var gain, Var shift, NormStats<T>& stats, NormMode mode,
                 NormOptions options = {});

template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b);

// Concatenates rank-4 tensors along the batch axis.
template <typename T>
Var stack_batch(Tape<T>& tape, std::span<const Var> parts);

// x: N x in, w: out x in, b: out -> N x out.
template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var b);

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b);

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor);

template <typename T>
Var sum(Tape<T>& tape, Var x);

template <typename T>
Var mean_abs(Tape<T>& tape, Var x);

template <typename T>
Var mean_square(Tape<T>& tape, Var x);

template <typename T>
Var sum_square(Tape<T>& tape, Var x);

// sum_k weights[k] * scalars[k]
template <typename T>
Var weighted_sum(Tape<T>& tape, std::span<const Var> scalars, std::span<const T> weights);

// Mean of (x - y)^2 over positions where mask == 1, across all channels.
// mask is H x W (rank 2) and broadcast over batch and channel. An all-zero
// mask yields 0.
template <typename T>
Var masked_mean_square(Tape<T>& tape, Var x, Var y, const Tensor<T>& mask);

}  // namespace lcm::ops
