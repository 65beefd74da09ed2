#include "lcm/nets.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lcm/rng.hpp"

namespace lcm {

std::string MapShape::str() const {
  std::ostringstream os;
  os << channels << 'x' << height << 'x' << width;
  return os.str();
}

std::size_t LayerSpec::param_count() const {
  std::size_t n = static_cast<std::size_t>(kernel) * kernel * in_channels * out_channels + out_channels;
  if (norm) n += 2 * static_cast<std::size_t>(out_channels);
  return n;
}

std::vector<MapShape> ArchSpec::propagate() const {
  std::vector<MapShape> shapes;
  MapShape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + std::to_string(i);
    MapShape in = cur;
    if (l.skip_source >= 0) {
      if (static_cast<std::size_t>(l.skip_source) >= i) {
        throw ShapeError(where + ": skip source " + std::to_string(l.skip_source) + " does not precede it");
      }
      const MapShape& s = shapes[l.skip_source];
      if (s.height != in.height || s.width != in.width) {
        throw ShapeError(where + ": skip map " + s.str() + " does not match input " + in.str());
      }
      in.channels += s.channels;
    }
    if (in.channels != l.in_channels) {
      throw ShapeError(where + ": declares " + std::to_string(l.in_channels) + " input channels but receives " +
                       in.str());
    }
    MapShape out{l.out_channels, 0, 0};
    if (l.kind == LayerKind::kConv) {
      const int eh = in.height + 2 * l.padding - l.kernel;
      const int ew = in.width + 2 * l.padding - l.kernel;
      if (eh < 0 || ew < 0 || l.stride < 1) throw GeometryError(where + ": kernel does not fit input " + in.str());
      out.height = eh / l.stride + 1;
      out.width = ew / l.stride + 1;
    } else {
      if (l.scale < 2 || l.kernel % 2 == 0) throw ContractError(where + ": upconv needs scale >= 2 and odd kernel");
      out.height = in.height * l.scale;
      out.width = in.width * l.scale;
    }
    shapes.push_back(out);
    cur = out;
  }
  return shapes;
}

void ArchSpec::validate() const {
  if (layers.empty()) throw ContractError("architecture has no layers");
  auto shapes = propagate();
  if (!(shapes.back() == output)) {
    throw ShapeError("declared output " + output.str() + " differs from propagated " + shapes.back().str());
  }
}

std::size_t ArchSpec::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.param_count();
  return n;
}

int ArchSpec::skip_count() const {
  return static_cast<int>(std::count_if(layers.begin(), layers.end(), [](const LayerSpec& l) { return l.skip_source >= 0; }));
}

namespace {

// Four unpadded 3x3 convolutions, widths doubling from the noise depth.
// No nonlinearity: the tiny boxed weights keep activations near zero, where
// LeakyReLU only rescales, so the net is linear in effect either way.
ArchSpec latent_template(int noise_channels, int z_channels, int z_size) {
  ArchSpec a;
  constexpr int kLayers = 4;
  a.input = MapShape{noise_channels, z_size + 2 * kLayers, z_size + 2 * kLayers};
  a.output = MapShape{z_channels, z_size, z_size};
  int c = noise_channels;
  for (int i = 0; i < kLayers; ++i) {
    LayerSpec l;
    l.kind = LayerKind::kConv;
    l.in_channels = c;
    l.out_channels = i + 1 == kLayers ? z_channels : c * 2;
    l.kernel = 3;
    l.activation = false;
    a.layers.push_back(l);
    c = l.out_channels;
  }
  return a;
}

// Hourglass: two stride-2 encoder convs, four 2x upconvs, skips from both
// pre-bottleneck encoder maps into the decoder at matching resolution.
ArchSpec generator_template(int z_channels, int z_size, int image_channels, int w1, int w2) {
  ArchSpec a;
  a.input = MapShape{z_channels, z_size, z_size};
  a.output = MapShape{image_channels, z_size * 4, z_size * 4};
  a.output_activation = OutputActivation::kSigmoid;
  auto conv = [](int in, int out, int stride) {
    LayerSpec l;
    l.kind = LayerKind::kConv;
    l.in_channels = in;
    l.out_channels = out;
    l.kernel = 3;
    l.stride = stride;
    l.padding = 1;
    l.norm = true;
    l.activation = true;
    return l;
  };
  auto up = [](int in, int out, int skip) {
    LayerSpec l;
    l.kind = LayerKind::kUpConv;
    l.in_channels = in;
    l.out_channels = out;
    l.kernel = 3;
    l.scale = 2;
    l.norm = true;
    l.activation = true;
    l.skip_source = skip;
    return l;
  };
  a.layers.push_back(conv(z_channels, w1, 1));  // 0: z size, skip A
  a.layers.push_back(conv(w1, w2, 2));          // 1: z/2, skip B
  a.layers.push_back(conv(w2, w2, 2));          // 2: z/4 bottleneck
  a.layers.push_back(up(w2, w2, -1));           // 3: z/2
  a.layers.push_back(up(w2 + w2, w2, 1));       // 4: z
  a.layers.push_back(up(w2 + w1, w1, 0));       // 5: 2z
  a.layers.push_back(up(w1, w1, -1));           // 6: 4z
  LayerSpec out = conv(w1, image_channels, 1);
  out.norm = false;
  out.activation = false;
  a.layers.push_back(out);
  return a;
}

}  // namespace

std::vector<std::string> preset_names() { return {"toy16", "toy32", "toy64"}; }

ArchPreset toy_arch_templates(const std::string& name) {
  ArchPreset p;
  p.name = name;
  if (name == "toy16") {
    p.latent = latent_template(4, 4, 4);
    p.generator = generator_template(4, 4, 3, 8, 16);
  } else if (name == "toy32") {
    p.latent = latent_template(4, 8, 8);
    p.generator = generator_template(8, 8, 3, 16, 32);
  } else if (name == "toy64") {
    p.latent = latent_template(4, 8, 16);
    p.generator = generator_template(8, 16, 3, 16, 32);
  } else {
    throw ContractError("unknown architecture preset '" + name + "'");
  }
  p.latent.validate();
  p.generator.validate();
  return p;
}

template <typename T>
Tensor<T> init_noise(Shape shape, std::uint64_t seed) {
  Rng rng(seed, 0x6e6f697365ULL);
  return rng.uniform_tensor<T>(shape, -1.0, 1.0);
}

template <typename T>
std::size_t LatentCodec<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& p : phi) n += p.size();
  return n;
}

template <typename T>
T LatentCodec<T>::max_abs() const {
  T m = 0;
  for (const auto& p : phi)
    for (T v : p.value.data()) m = std::max(m, std::abs(v));
  return m;
}

template <typename T>
void LatentCodec<T>::project() {
  for (auto& p : phi) p.project();
}

template <typename T>
LatentCodec<T> init_latent_codec(const ArchSpec& arch, std::uint64_t seed, T bound) {
  arch.validate();
  if (!(bound > T{0})) throw ContractError("latent box bound must be > 0");
  LatentCodec<T> codec;
  codec.arch = arch;
  Rng rng(seed, 0x6c6174656e74ULL);
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const std::string prefix = "f" + std::to_string(i);
    codec.phi.emplace_back(prefix + ".weight",
                           rng.uniform_tensor<T>(Shape{l.out_channels, l.in_channels, l.kernel, l.kernel}, -bound, bound),
                           bound);
    codec.phi.emplace_back(prefix + ".bias", rng.uniform_tensor<T>(Shape{l.out_channels}, -bound, bound), bound);
  }
  return codec;
}

template <typename T>
std::vector<ParamBlock<T>*> GeneratorModel<T>::params() {
  std::vector<ParamBlock<T>*> out;
  if (input_linear) {
    out.push_back(&input_linear->weight);
    out.push_back(&input_linear->bias);
  }
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
    if (l.gain) out.push_back(&*l.gain);
    if (l.shift) out.push_back(&*l.shift);
  }
  return out;
}

template <typename T>
std::vector<const ParamBlock<T>*> GeneratorModel<T>::params() const {
  std::vector<const ParamBlock<T>*> out;
  for (ParamBlock<T>* p : const_cast<GeneratorModel*>(this)->params()) out.push_back(p);
  return out;
}

template <typename T>
std::size_t GeneratorModel<T>::param_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->size();
  return n;
}

template <typename T>
GeneratorModel<T> init_generator(const ArchSpec& arch, std::uint64_t seed, int vector_dim) {
  arch.validate();
  GeneratorModel<T> model;
  model.arch = arch;
  Rng rng(seed, 0x67656e6572ULL);
  if (vector_dim > 0) {
    const int out = static_cast<int>(arch.input.numel());
    const double b = std::sqrt(1.0 / vector_dim);
    model.input_linear = LinearInput<T>{vector_dim, ParamBlock<T>("in.weight", rng.uniform_tensor<T>(Shape{out, vector_dim}, -b, b)),
                                        ParamBlock<T>("in.bias", rng.uniform_tensor<T>(Shape{out}, -b, b))};
  }
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const std::string prefix = "g" + std::to_string(i);
    const double b = std::sqrt(1.0 / (static_cast<double>(l.in_channels) * l.kernel * l.kernel));
    ConvLayerParams<T> p{
        ParamBlock<T>(prefix + ".weight",
                      rng.uniform_tensor<T>(Shape{l.out_channels, l.in_channels, l.kernel, l.kernel}, -b, b)),
        ParamBlock<T>(prefix + ".bias", rng.uniform_tensor<T>(Shape{l.out_channels}, -b, b)),
        std::nullopt,
        std::nullopt,
        {}};
    if (l.norm) {
      p.gain = ParamBlock<T>(prefix + ".gain", Tensor<T>(Shape{l.out_channels}, T{1}));
      p.shift = ParamBlock<T>(prefix + ".shift", Tensor<T>(Shape{l.out_channels}, T{0}));
      p.stats = ops::NormStats<T>(l.out_channels);
    }
    model.layers.push_back(std::move(p));
  }
  return model;
}

template <typename T>
GloLatent<T> init_glo_latent(GloKind kind, const MapShape& map_shape, int vector_dim, std::uint64_t seed) {
  Rng rng(seed, 0x676c6fULL);
  GloLatent<T> g;
  g.kind = kind;
  if (kind == GloKind::kMap) {
    g.value = ParamBlock<T>("z", rng.uniform_tensor<T>(map_shape.batch(1), -1.0, 1.0));
  } else {
    if (vector_dim < 1) throw ContractError("vector latent needs dimension >= 1");
    g.value = ParamBlock<T>("z", rng.uniform_tensor<T>(Shape{1, vector_dim}, -1.0, 1.0));
  }
  return g;
}

namespace {

template <typename T>
Var use_param(Tape<T>& tape, ParamBlock<T>& block, ParamUse use) {
  return use == ParamUse::kTrainable ? tape.param(block) : tape.frozen(block);
}

}  // namespace

template <typename T>
Var forward_latent(Tape<T>& tape, LatentCodec<T>& codec, Var noise, ParamUse use) {
  const ArchSpec& arch = codec.arch;
  const Shape& ns = tape.value(noise).shape();
  if (!(ns == arch.input.batch(ns.rank() == 4 ? ns[0] : 1))) {
    throw ShapeError("latent net expects noise " + arch.input.str() + ", got " + ns.str());
  }
  Var x = noise;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    Var w = use_param(tape, codec.phi[2 * i], use);
    Var b = use_param(tape, codec.phi[2 * i + 1], use);
    x = l.kind == LayerKind::kConv ? ops::conv2d(tape, x, w, b, l.stride, l.padding)
                                   : ops::upsample_conv(tape, x, w, b, l.scale);
    if (l.activation) x = ops::leaky_relu(tape, x, static_cast<T>(arch.slope));
  }
  return x;
}

template <typename T>
Var forward_generator(Tape<T>& tape, GeneratorModel<T>& model, Var z, ops::NormMode mode, ParamUse use,
                      SkipMode skips) {
  const ArchSpec& arch = model.arch;
  const Shape& zs = tape.value(z).shape();
  if (zs.rank() != 4 || !(zs == arch.input.batch(zs[0]))) {
    throw ShapeError("generator expects latent maps " + arch.input.str() + ", got " + zs.str());
  }
  std::vector<Var> outs;
  Var x = z;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    ConvLayerParams<T>& p = model.layers[i];
    if (l.skip_source >= 0) {
      Var skip = outs[l.skip_source];
      if (skips == SkipMode::kZeroed) skip = tape.constant(Tensor<T>(tape.value(skip).shape()));
      x = ops::concat_channels(tape, x, skip);
    }
    Var w = use_param(tape, p.weight, use);
    Var b = use_param(tape, p.bias, use);
    x = l.kind == LayerKind::kConv ? ops::conv2d(tape, x, w, b, l.stride, l.padding)
                                   : ops::upsample_conv(tape, x, w, b, l.scale);
    if (l.norm) {
      x = ops::channel_norm(tape, x, use_param(tape, *p.gain, use), use_param(tape, *p.shift, use), p.stats, mode);
    }
    if (l.activation) x = ops::leaky_relu(tape, x, static_cast<T>(arch.slope));
    outs.push_back(x);
  }
  if (arch.output_activation == OutputActivation::kSigmoid) x = ops::sigmoid(tape, x);
  return x;
}

template <typename T>
Var forward_generator_vector(Tape<T>& tape, GeneratorModel<T>& model, Var v, ops::NormMode mode, ParamUse use) {
  if (!model.input_linear) throw ContractError("generator has no vector input layer");
  const Shape& vs = tape.value(v).shape();
  if (vs.rank() != 2 || vs[1] != model.input_linear->dim) {
    throw ShapeError("vector latent " + vs.str() + " does not match input dimension " +
                     std::to_string(model.input_linear->dim));
  }
  Var h = ops::linear(tape, v, use_param(tape, model.input_linear->weight, use),
                      use_param(tape, model.input_linear->bias, use));
  Var z = ops::reshape(tape, h, model.arch.input.batch(vs[0]));
  return forward_generator(tape, model, z, mode, use);
}

template <typename T>
Tensor<T> eval_latent(LatentCodec<T>& codec, const Tensor<T>& noise) {
  Tape<T> tape;
  return tape.value(forward_latent(tape, codec, tape.constant(noise), ParamUse::kFrozen));
}

template <typename T>
Tensor<T> eval_generator(GeneratorModel<T>& model, const Tensor<T>& z) {
  Tape<T> tape;
  return tape.value(forward_generator(tape, model, tape.constant(z), ops::NormMode::kEval, ParamUse::kFrozen));
}

#define LCMKIT_INSTANTIATE_NETS(T)                                                                       \
  template Tensor<T> init_noise<T>(Shape, std::uint64_t);                                                \
  template struct LatentCodec<T>;                                                                        \
  template LatentCodec<T> init_latent_codec<T>(const ArchSpec&, std::uint64_t, T);                       \
  template struct GeneratorModel<T>;                                                                     \
  template GeneratorModel<T> init_generator<T>(const ArchSpec&, std::uint64_t, int);                     \
  template GloLatent<T> init_glo_latent<T>(GloKind, const MapShape&, int, std::uint64_t);                \
  template Var forward_latent<T>(Tape<T>&, LatentCodec<T>&, Var, ParamUse);                              \
  template Var forward_generator<T>(Tape<T>&, GeneratorModel<T>&, Var, ops::NormMode, ParamUse, SkipMode); \
  template Var forward_generator_vector<T>(Tape<T>&, GeneratorModel<T>&, Var, ops::NormMode, ParamUse);  \
  template Tensor<T> eval_latent<T>(LatentCodec<T>&, const Tensor<T>&);                                  \
  template Tensor<T> eval_generator<T>(GeneratorModel<T>&, const Tensor<T>&);

LCMKIT_INSTANTIATE_NETS(float)
LCMKIT_INSTANTIATE_NETS(double)

}  // namespace lcm
