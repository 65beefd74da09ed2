#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcm/ops.hpp"
#include "lcm/tape.hpp"
#include "lcm/tensor.hpp"

namespace lcm {

struct MapShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  Shape batch(int n = 1) const { return Shape{n, channels, height, width}; }
  std::size_t numel() const { return static_cast<std::size_t>(channels) * height * width; }
  std::string str() const;
  friend bool operator==(const MapShape&, const MapShape&) = default;
};

enum class LayerKind { kConv, kUpConv };

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;   // kConv only
  int padding = 0;  // kConv only; kUpConv always pads to preserve size
  int scale = 1;    // kUpConv only
  bool norm = false;
  bool activation = false;
  // Output of this earlier layer is concatenated (channel axis) onto the
  // layer input; -1 for none.
  int skip_source = -1;

  std::size_t param_count() const;
};

enum class OutputActivation { kNone, kSigmoid };

struct ArchSpec {
  std::vector<LayerSpec> layers;
  MapShape input;
  MapShape output;
  OutputActivation output_activation = OutputActivation::kNone;
  double slope = 0.2;

  // Per-layer output shapes; throws ShapeError when the chain is inconsistent.
  std::vector<MapShape> propagate() const;
  // Also checks that the declared output equals the propagated one.
  void validate() const;
  std::size_t param_count() const;
  int skip_count() const;
};

struct ArchPreset {
  std::string name;
  ArchSpec latent;
  ArchSpec generator;
};

// Scaled-down architecture pairs: "toy16", "toy32", "toy64".
ArchPreset toy_arch_templates(const std::string& name);
std::vector<std::string> preset_names();

// Entries i.i.d. uniform on [-1, 1].
template <typename T>
Tensor<T> init_noise(Shape shape, std::uint64_t seed);

enum class ParamUse { kTrainable, kFrozen };

// Per-image latent ConvNet f_phi. phi holds weight/bias pairs per layer,
// all boxed to [-B, B].
template <typename T>
struct LatentCodec {
  ArchSpec arch;
  std::vector<ParamBlock<T>> phi;

  std::size_t param_count() const;
  T max_abs() const;
  void project();
};

template <typename T>
LatentCodec<T> init_latent_codec(const ArchSpec& arch, std::uint64_t seed, T bound = T(0.01));

template <typename T>
struct ConvLayerParams {
  ParamBlock<T> weight;
  ParamBlock<T> bias;
  std::optional<ParamBlock<T>> gain;
  std::optional<ParamBlock<T>> shift;
  ops::NormStats<T> stats;
};

// Learned d -> C*H*W map placed in front of the generator for vector latents.
template <typename T>
struct LinearInput {
  int dim = 0;
  ParamBlock<T> weight;
  ParamBlock<T> bias;
};

template <typename T>
struct GeneratorModel {
  ArchSpec arch;
  std::vector<ConvLayerParams<T>> layers;
  std::optional<LinearInput<T>> input_linear;

  // Trainable blocks in declaration order (input linear first).
  std::vector<ParamBlock<T>*> params();
  std::vector<const ParamBlock<T>*> params() const;
  std::size_t param_count() const;
};

template <typename T>
GeneratorModel<T> init_generator(const ArchSpec& arch, std::uint64_t seed, int vector_dim = 0);

enum class GloKind { kMap, kVector };

// Free latent of the GLO baselines.
template <typename T>
struct GloLatent {
  GloKind kind = GloKind::kMap;
  ParamBlock<T> value;
};

template <typename T>
GloLatent<T> init_glo_latent(GloKind kind, const MapShape& map_shape, int vector_dim, std::uint64_t seed);

enum class SkipMode { kConcat, kZeroed };

// z = f_phi(noise); noise is 1 x C_s x H_s x W_s.
template <typename T>
Var forward_latent(Tape<T>& tape, LatentCodec<T>& codec, Var noise, ParamUse use = ParamUse::kTrainable);

// Image batch from a latent map batch. kZeroed replaces skip tensors by
// zeros (ablation).
template <typename T>
Var forward_generator(Tape<T>& tape, GeneratorModel<T>& model, Var z, ops::NormMode mode,
                      ParamUse use = ParamUse::kTrainable, SkipMode skips = SkipMode::kConcat);

// Vector latents (N x d) through the learned input map, then the generator.
template <typename T>
Var forward_generator_vector(Tape<T>& tape, GeneratorModel<T>& model, Var v, ops::NormMode mode,
                             ParamUse use = ParamUse::kTrainable);

// Plain evaluation helpers (eval-mode normalization).
template <typename T>
Tensor<T> eval_latent(LatentCodec<T>& codec, const Tensor<T>& noise);
template <typename T>
Tensor<T> eval_generator(GeneratorModel<T>& model, const Tensor<T>& z);

}  // namespace lcm
