#include "lcm/train.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "lcm/ops.hpp"
#include "lcm/rng.hpp"

namespace lcm {

void TrainConfig::validate() const {
  if (!(lr_latent > 0) || !(lr_generator > 0) || !(lr_glo > 0)) throw ContractError("learning rates must be > 0");
  if (!(box > 0)) throw ContractError("latent box bound must be > 0");
  if (batch_size < 1) throw ContractError("batch size must be >= 1");
  if (epochs < 0 || steps < 0 || (epochs == 0 && steps == 0)) throw ContractError("need a positive epoch or step budget");
  if (variant == ModelVariant::kGloVector && vector_dim < 1) throw ContractError("glo_vector needs vector_dim >= 1");
}

PyramidSpec TrainConfig::pyramid(const MapShape& image) const {
  if (pyramid_levels > 0) {
    PyramidSpec p{pyramid_levels};
    p.validate(image.height, image.width);
    return p;
  }
  return PyramidSpec::default_for(image.height, image.width);
}

double TrainState::max_abs_phi() const {
  Real m = 0;
  for (const auto& c : codecs) m = std::max(m, c.max_abs());
  return m;
}

TrainState init_train_state(const Dataset& data, const TrainConfig& config) {
  config.validate();
  if (data.size() == 0) throw ContractError("training needs a non-empty dataset");
  TrainState s;
  s.variant = config.variant;
  s.arch = toy_arch_templates(config.preset);
  s.box = config.box;
  if (!(s.arch.generator.output == data.shape)) {
    throw ShapeError("preset '" + config.preset + "' generates " + s.arch.generator.output.str() +
                     " images but the dataset holds " + data.shape.str());
  }
  s.vector_dim = config.variant == ModelVariant::kGloVector ? config.vector_dim : 0;
  s.generator = init_generator<Real>(s.arch.generator, Rng::mix(config.seed, 1), s.vector_dim);
  const std::uint64_t latent_seed = Rng::mix(config.seed, 2);
  for (std::size_t i = 0; i < data.size(); ++i) {
    switch (config.variant) {
      case ModelVariant::kLcm:
        s.codecs.push_back(init_latent_codec<Real>(s.arch.latent, Rng::mix(latent_seed, i), static_cast<Real>(config.box)));
        break;
      case ModelVariant::kGloMap:
        s.glo.push_back(init_glo_latent<Real>(GloKind::kMap, s.arch.generator.input, 0, Rng::mix(latent_seed, i)));
        break;
      case ModelVariant::kGloVector:
        s.glo.push_back(
            init_glo_latent<Real>(GloKind::kVector, s.arch.generator.input, config.vector_dim, Rng::mix(latent_seed, i)));
        break;
    }
  }
  if (config.variant == ModelVariant::kLcm) s.noise = init_noise<Real>(s.arch.latent.input.batch(1), Rng::mix(config.seed, 3));
  return s;
}

namespace {

struct Forward {
  Var output;
  Var loss;
};

Forward forward_batch(Tape<Real>& tape, TrainState& state, const Dataset& data, std::span<const int> batch,
                      const TrainConfig& config, ops::NormMode mode, ParamUse use) {
  std::vector<Var> latents;
  Var x_hat;
  switch (state.variant) {
    case ModelVariant::kLcm: {
      Var s = tape.constant(state.noise);
      for (int i : batch) latents.push_back(forward_latent(tape, state.codecs.at(i), s, use));
      x_hat = forward_generator(tape, state.generator, ops::stack_batch<Real>(tape, latents), mode, use);
      break;
    }
    case ModelVariant::kGloMap: {
      for (int i : batch) {
        auto& z = state.glo.at(i).value;
        latents.push_back(use == ParamUse::kTrainable ? tape.param(z) : tape.frozen(z));
      }
      x_hat = forward_generator(tape, state.generator, ops::stack_batch<Real>(tape, latents), mode, use);
      break;
    }
    case ModelVariant::kGloVector: {
      const int d = state.vector_dim;
      for (int i : batch) {
        auto& z = state.glo.at(i).value;
        Var v = use == ParamUse::kTrainable ? tape.param(z) : tape.frozen(z);
        latents.push_back(ops::reshape(tape, v, Shape{1, 1, 1, d}));
      }
      Var stacked = ops::reshape(tape, ops::stack_batch<Real>(tape, latents), Shape{static_cast<int>(batch.size()), d});
      x_hat = forward_generator_vector(tape, state.generator, stacked, mode, use);
      break;
    }
  }
  std::vector<int> idx(batch.begin(), batch.end());
  Var target = tape.constant(data.batch(idx));
  return {x_hat, ops::combined_loss(tape, x_hat, target, config.pyramid(data.shape))};
}

ops::NormMode train_mode(const TrainConfig& config) {
  return config.freeze_norm_stats ? ops::NormMode::kEval : ops::NormMode::kTrain;
}

}  // namespace

double batch_loss(TrainState& state, const Dataset& data, std::span<const int> batch, const TrainConfig& config,
                  ops::NormMode mode) {
  if (mode == ops::NormMode::kTrain) {
    // batch statistics without touching the running averages
    TrainState copy = state;
    Tape<Real> tape;
    return tape.scalar(forward_batch(tape, copy, data, batch, config, mode, ParamUse::kFrozen).loss);
  }
  Tape<Real> tape;
  return tape.scalar(forward_batch(tape, state, data, batch, config, mode, ParamUse::kFrozen).loss);
}

double train_step(TrainState& state, const Dataset& data, std::span<const int> batch, const TrainConfig& config) {
  if (batch.empty()) throw ContractError("empty minibatch");
  for (int i : batch) {
    if (i < 0 || static_cast<std::size_t>(i) >= state.latent_count()) {
      throw ContractError("minibatch index " + std::to_string(i) + " out of range");
    }
  }
  Tape<Real> tape;
  Forward f = forward_batch(tape, state, data, batch, config, train_mode(config), ParamUse::kTrainable);
  const double loss = tape.scalar(f.loss);
  if (!std::isfinite(loss)) return loss;
  tape.backward(f.loss);

  for (ParamBlock<Real>* p : state.generator.params()) p->sgd_step(static_cast<Real>(config.lr_generator));
  for (int i : batch) {
    if (state.variant == ModelVariant::kLcm) {
      for (auto& p : state.codecs[i].phi) p.sgd_step(static_cast<Real>(config.lr_latent));
    } else {
      state.glo[i].value.sgd_step(static_cast<Real>(config.lr_glo));
    }
  }
  ++state.step;
  state.step_losses.push_back(loss);
  return loss;
}

std::vector<int> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  Rng rng(seed, 0x73687566ULL + static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

void train_more(TrainState& state, const Dataset& data, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (state.latent_count() != data.size()) {
    throw ContractError("state holds " + std::to_string(state.latent_count()) + " latents for " +
                        std::to_string(data.size()) + " images");
  }
  const std::size_t n = data.size();
  const int bs = std::min<int>(config.batch_size, static_cast<int>(n));
  const int step_limit = config.steps > 0 ? state.step + config.steps : -1;
  const int epoch_limit = config.epochs > 0 ? state.epoch + config.epochs : -1;
  while ((step_limit < 0 || state.step < step_limit) && (epoch_limit < 0 || state.epoch < epoch_limit)) {
    const auto order = epoch_order(n, config.seed, state.epoch);
    double sum = 0;
    int count = 0;
    for (std::size_t b = 0; b < n && (step_limit < 0 || state.step < step_limit); b += bs) {
      const std::size_t e = std::min(n, b + bs);
      const std::span<const int> batch(order.data() + b, e - b);
      const double loss = train_step(state, data, batch, config);
      if (!std::isfinite(loss)) {
        throw NumericalError("non-finite loss at step " + std::to_string(state.step) + " (epoch " +
                             std::to_string(state.epoch) + "); last good checkpoint: " +
                             (hooks.last_checkpoint.empty() ? std::string("none") : hooks.last_checkpoint));
      }
      sum += loss;
      ++count;
    }
    state.history.push_back({state.epoch, sum / std::max(count, 1)});
    ++state.epoch;
    if (hooks.on_epoch) hooks.on_epoch(state);
  }
  if (config.recalibrate && !config.freeze_norm_stats) recalibrate_norm_stats(state, data, config.batch_size);
}

TrainState train(const Dataset& data, const TrainConfig& config, const TrainHooks& hooks) {
  TrainState state = init_train_state(data, config);
  train_more(state, data, config, hooks);
  return state;
}

void recalibrate_norm_stats(TrainState& state, const Dataset& data, int batch_size) {
  for (auto& l : state.generator.layers) {
    if (l.gain) l.stats.calibration_batches = 0;
  }
  TrainConfig cfg;
  const std::size_t n = data.size();
  const int bs = std::max(1, batch_size);
  for (std::size_t b = 0; b < n; b += bs) {
    std::vector<int> batch;
    for (std::size_t i = b; i < std::min(n, b + bs); ++i) batch.push_back(static_cast<int>(i));
    Tape<Real> tape;
    forward_batch(tape, state, data, batch, cfg, ops::NormMode::kCalibrate, ParamUse::kFrozen);
  }
}

double eval_loss_train(TrainState& state, const Dataset& data, const TrainConfig& config) {
  if (data.size() == 0) throw ContractError("eval_loss on an empty split");
  double total = 0;
  const int bs = std::max(1, config.batch_size);
  for (std::size_t b = 0; b < data.size(); b += bs) {
    std::vector<int> batch;
    for (std::size_t i = b; i < std::min(data.size(), b + bs); ++i) batch.push_back(static_cast<int>(i));
    total += batch_loss(state, data, batch, config, ops::NormMode::kEval) * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(data.size());
}

double population_loss(const TrainState& state, const Dataset& data, const TrainConfig& config) {
  TrainState copy = state;
  recalibrate_norm_stats(copy, data, config.batch_size);
  return eval_loss_train(copy, data, config);
}

void write_loss_csv(const TrainState& state, std::ostream& out) {
  out << "epoch,split,loss\n";
  char buf[64];
  for (const auto& r : state.history) {
    std::snprintf(buf, sizeof buf, "%d,train,%.9g\n", r.epoch, r.loss);
    out << buf;
  }
}

Checkpoint to_checkpoint(const TrainState& state, const std::vector<std::string>& ids, const std::string& manifest_hash,
                         const std::string& config_json) {
  if (ids.size() != state.latent_count()) throw ContractError("id count differs from latent count");
  Checkpoint c;
  c.variant = state.variant;
  c.preset = state.arch.name;
  c.latent_arch = state.arch.latent;
  c.noise = state.noise;
  c.generator = state.generator;
  c.vector_dim = state.vector_dim;
  c.box = state.box;
  c.ids = ids;
  c.codecs = state.codecs;
  c.glo = state.glo;
  c.manifest_hash = manifest_hash;
  c.config_json = config_json;
  c.epoch = state.epoch;
  return c;
}

TrainState from_checkpoint(const Checkpoint& c) {
  TrainState s;
  s.variant = c.variant;
  s.arch.name = c.preset;
  s.arch.latent = c.latent_arch;
  s.arch.generator = c.generator.arch;
  s.noise = c.noise;
  s.generator = c.generator;
  s.codecs = c.codecs;
  s.glo = c.glo;
  s.vector_dim = c.vector_dim;
  s.box = c.box;
  s.epoch = c.epoch;
  return s;
}

}  // namespace lcm
