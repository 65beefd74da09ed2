#include "lcm/restore.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "lcm/ops.hpp"
#include "lcm/rng.hpp"

namespace lcm {

std::string mode_name(RestoreMode mode) {
  switch (mode) {
    case RestoreMode::kManifold: return "manifold";
    case RestoreMode::kZSpace: return "zspace";
    case RestoreMode::kGlo: return "glo";
  }
  return "?";
}

RestoreMode parse_mode(const std::string& name) {
  if (name == "manifold") return RestoreMode::kManifold;
  if (name == "zspace") return RestoreMode::kZSpace;
  if (name == "glo") return RestoreMode::kGlo;
  throw ContractError("unknown restoration mode '" + name + "' (manifold|zspace|glo)");
}

double RestoreConfig::effective_lr() const {
  if (lr) return *lr;
  return mode == RestoreMode::kGlo ? 10.0 : 1.0;
}

void RestoreConfig::validate() const {
  if (steps < 1) throw ContractError("restoration needs steps >= 1");
  if (!(effective_lr() > 0)) throw ContractError("restoration lr must be > 0");
  if (!(latent_penalty >= 0)) throw ContractError("latent penalty must be >= 0");
  if (!(box > 0)) throw ContractError("latent box bound must be > 0");
  if (!(divergence_factor > 1) || divergence_patience < 1) throw ContractError("bad divergence guard settings");
}

namespace {

struct Step {
  Var image;
  Var latent;  // z fed to the generator
};

// Shared projected-SGD loop. `forward` builds the image for the current
// latent parameters; `params` are updated after every backward pass.
template <typename Forward>
RestorationResult optimize(GeneratorModel<Real>& model, const Tensor<Real>& y, DegradationSpec spec,
                           const RestoreConfig& cfg, std::vector<ParamBlock<Real>*> params, Forward&& forward) {
  cfg.validate();
  spec.latent_penalty = cfg.latent_penalty;
  spec.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Real lr = static_cast<Real>(cfg.effective_lr());

  RestorationResult r;
  r.mode = cfg.mode;
  r.best_energy = std::numeric_limits<double>::infinity();
  int over = 0;
  for (int step = 0; step <= cfg.steps; ++step) {
    Tape<Real> tape;
    Step s = forward(tape, model);
    Var yv = tape.constant(y);
    Var norm = cfg.latent_penalty > 0 ? ops::sum_square(tape, s.latent) : Var{};
    auto e = ops::energy(tape, s.image, yv, spec, norm);
    const double energy = tape.scalar(e.total);
    r.energy_trace.push_back(energy);
    if (!std::isfinite(energy)) {
      throw DivergenceError("non-finite restoration energy at step " + std::to_string(step), r.energy_trace);
    }
    if (energy < r.best_energy) {
      r.best_energy = energy;
      r.best_step = step;
      r.known_mse = tape.scalar(e.data_term);
      r.image = tape.value(s.image);
      r.z = tape.value(s.latent);
      if (cfg.mode == RestoreMode::kManifold) {
        LatentCodec<Real> codec;
        codec.phi.reserve(params.size());
        for (auto* p : params) codec.phi.push_back(*p);
        r.phi = std::move(codec);
      }
    }
    if (energy > cfg.divergence_factor * r.energy_trace.front()) {
      if (++over >= cfg.divergence_patience) {
        throw DivergenceError("restoration diverged: energy above " + std::to_string(cfg.divergence_factor) +
                                  "x the initial value for " + std::to_string(over) + " steps",
                              r.energy_trace);
      }
    } else {
      over = 0;
    }
    if (step == cfg.steps) break;
    tape.backward(e.total);
    for (auto* p : params) p->sgd_step(lr);
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

void check_observation(const GeneratorModel<Real>& model, const Tensor<Real>& y, const DegradationSpec& spec) {
  const Shape expect = spec.observed_shape(model.arch.output.batch(1));
  if (!(y.shape() == expect)) {
    throw ShapeError("observation has shape " + y.shape().str() + ", degradation expects " + expect.str());
  }
}

LatentCodec<Real> start_codec(const ArchSpec& latent_arch, const RestoreConfig& cfg) {
  if (cfg.init_phi) return *cfg.init_phi;
  return init_latent_codec<Real>(latent_arch, Rng::mix(cfg.seed, 0x7068ULL), static_cast<Real>(cfg.box));
}

}  // namespace

RestorationResult restore_manifold(const GeneratorModel<Real>& model, const ArchSpec& latent_arch,
                                   const Tensor<Real>& noise, const Tensor<Real>& y, const DegradationSpec& spec,
                                   const RestoreConfig& cfg) {
  check_observation(model, y, spec);
  GeneratorModel<Real> frozen = model;
  LatentCodec<Real> codec = start_codec(latent_arch, cfg);
  std::vector<ParamBlock<Real>*> params;
  for (auto& p : codec.phi) params.push_back(&p);
  RestoreConfig c = cfg;
  c.mode = RestoreMode::kManifold;
  auto result = optimize(frozen, y, spec, c, params, [&](Tape<Real>& tape, GeneratorModel<Real>& g) {
    Var z = forward_latent(tape, codec, tape.constant(noise), ParamUse::kTrainable);
    return Step{forward_generator(tape, g, z, ops::NormMode::kEval, ParamUse::kFrozen), z};
  });
  if (result.phi) result.phi->arch = latent_arch;
  return result;
}

RestorationResult restore_zspace(const GeneratorModel<Real>& model, const ArchSpec& latent_arch,
                                 const Tensor<Real>& noise, const Tensor<Real>& y, const DegradationSpec& spec,
                                 const RestoreConfig& cfg) {
  check_observation(model, y, spec);
  GeneratorModel<Real> frozen = model;
  Tensor<Real> z0;
  if (cfg.init_z) {
    z0 = *cfg.init_z;
  } else {
    LatentCodec<Real> codec = start_codec(latent_arch, cfg);
    z0 = eval_latent(codec, noise);
  }
  ParamBlock<Real> z("z", std::move(z0));
  RestoreConfig c = cfg;
  c.mode = RestoreMode::kZSpace;
  return optimize(frozen, y, spec, c, {&z}, [&](Tape<Real>& tape, GeneratorModel<Real>& g) {
    Var zv = tape.param(z);
    return Step{forward_generator(tape, g, zv, ops::NormMode::kEval, ParamUse::kFrozen), zv};
  });
}

RestorationResult restore_glo(const GeneratorModel<Real>& model, const GloLatent<Real>& templ, const Tensor<Real>& y,
                              const DegradationSpec& spec, const RestoreConfig& cfg) {
  check_observation(model, y, spec);
  const bool vector = templ.kind == GloKind::kVector;
  if (vector != model.input_linear.has_value()) {
    throw ContractError("GLO latent kind does not match the generator input");
  }
  GeneratorModel<Real> frozen = model;
  GloLatent<Real> latent =
      init_glo_latent<Real>(templ.kind, model.arch.input, vector ? model.input_linear->dim : 0, Rng::mix(cfg.seed, 0x7aULL));
  if (cfg.init_z) {
    if (!(cfg.init_z->shape() == latent.value.value.shape())) throw ShapeError("initial GLO latent has the wrong shape");
    latent.value.value = *cfg.init_z;
  }
  RestoreConfig c = cfg;
  c.mode = RestoreMode::kGlo;
  return optimize(frozen, y, spec, c, {&latent.value}, [&](Tape<Real>& tape, GeneratorModel<Real>& g) {
    Var zv = tape.param(latent.value);
    Var x = vector ? forward_generator_vector(tape, g, zv, ops::NormMode::kEval, ParamUse::kFrozen)
                   : forward_generator(tape, g, zv, ops::NormMode::kEval, ParamUse::kFrozen);
    return Step{x, zv};
  });
}

}  // namespace lcm
