#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcm/degrade.hpp"
#include "lcm/error.hpp"
#include "lcm/nets.hpp"

namespace lcm {

enum class RestoreMode { kManifold, kZSpace, kGlo };

std::string mode_name(RestoreMode mode);
RestoreMode parse_mode(const std::string& name);

struct RestoreConfig {
  int steps = 2000;
  std::optional<double> lr;  // unset: 1.0, or 10.0 for GLO latents
  RestoreMode mode = RestoreMode::kManifold;
  double latent_penalty = 0.0;  // overrides the spec's lambda
  std::uint64_t seed = 0;
  double box = 0.01;
  // Warm starts; fresh random latents when unset.
  std::optional<LatentCodec<Real>> init_phi;
  std::optional<Tensor<Real>> init_z;
  double divergence_factor = 10.0;
  int divergence_patience = 100;

  double effective_lr() const;
  void validate() const;
};

struct RestorationResult {
  Tensor<Real> image;  // best iterate, 1 x C x H x W
  // energy_trace[k] is the energy before update k; the last entry is the
  // energy after the final update.
  std::vector<double> energy_trace;
  double best_energy = 0.0;
  int best_step = 0;
  double known_mse = 0.0;  // data term at the best iterate
  double seconds = 0.0;
  RestoreMode mode = RestoreMode::kManifold;
  // Latent of the best iterate: phi for manifold, z otherwise.
  std::optional<LatentCodec<Real>> phi;
  Tensor<Real> z;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::vector<double> trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

// Optimizes phi of a fresh latent ConvNet over the frozen generator.
RestorationResult restore_manifold(const GeneratorModel<Real>& model, const ArchSpec& latent_arch,
                                   const Tensor<Real>& noise, const Tensor<Real>& y, const DegradationSpec& spec,
                                   const RestoreConfig& cfg);

// Optimizes z directly, starting from f_phi0(noise).
RestorationResult restore_zspace(const GeneratorModel<Real>& model, const ArchSpec& latent_arch,
                                 const Tensor<Real>& noise, const Tensor<Real>& y, const DegradationSpec& spec,
                                 const RestoreConfig& cfg);

// Optimizes a GLO latent shaped like `templ` from a random start.
RestorationResult restore_glo(const GeneratorModel<Real>& model, const GloLatent<Real>& templ, const Tensor<Real>& y,
                              const DegradationSpec& spec, const RestoreConfig& cfg);

}  // namespace lcm
