#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lcm/checkpoint.hpp"
#include "lcm/dataset.hpp"
#include "lcm/losses.hpp"
#include "lcm/nets.hpp"

namespace lcm {

struct TrainConfig {
  std::string preset = "toy32";
  ModelVariant variant = ModelVariant::kLcm;
  int vector_dim = 0;    // glo_vector only
  int epochs = 0;        // 0: bounded by steps only
  int steps = 2000;      // 0: bounded by epochs only
  int batch_size = 16;
  double lr_latent = 1.0;     // phi (LCM)
  double lr_generator = 1.0;  // theta
  double lr_glo = 10.0;       // GLO latents
  std::uint64_t seed = 0;
  double box = 0.01;
  int pyramid_levels = 0;  // 0: default for the image size
  int checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
  bool freeze_norm_stats = false;
  bool recalibrate = true;  // population statistics after training

  void validate() const;
  PyramidSpec pyramid(const MapShape& image) const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
};

struct TrainState {
  ModelVariant variant = ModelVariant::kLcm;
  ArchPreset arch;
  Tensor<Real> noise;  // LCM input s
  GeneratorModel<Real> generator;
  std::vector<LatentCodec<Real>> codecs;
  std::vector<GloLatent<Real>> glo;
  int vector_dim = 0;
  double box = 0.01;
  int epoch = 0;
  int step = 0;
  std::vector<double> step_losses;
  std::vector<EpochRecord> history;

  std::size_t latent_count() const { return variant == ModelVariant::kLcm ? codecs.size() : glo.size(); }
  double max_abs_phi() const;
};

TrainState init_train_state(const Dataset& data, const TrainConfig& config);

// One joint projected-SGD step on the minibatch; returns the batch loss
// measured before the update.
double train_step(TrainState& state, const Dataset& data, std::span<const int> batch, const TrainConfig& config);

// Batch loss without any parameter or statistics update.
double batch_loss(TrainState& state, const Dataset& data, std::span<const int> batch, const TrainConfig& config,
                  ops::NormMode mode);

struct TrainHooks {
  // Called after every epoch; may write checkpoints.
  std::function<void(const TrainState&)> on_epoch;
  // Reported in numerical-failure diagnostics.
  std::string last_checkpoint;
};

TrainState train(const Dataset& data, const TrainConfig& config, const TrainHooks& hooks = {});

// Continues from an existing state (e.g. loaded from a checkpoint).
void train_more(TrainState& state, const Dataset& data, const TrainConfig& config, const TrainHooks& hooks = {});

// Replaces running statistics by the average of per-batch statistics over
// one ordered pass of the dataset.
void recalibrate_norm_stats(TrainState& state, const Dataset& data, int batch_size);

// Mean combined loss in eval mode over the stored training latents.
double eval_loss_train(TrainState& state, const Dataset& data, const TrainConfig& config);

// eval_loss_train on a copy of the state whose statistics were first
// recalibrated; used for the loss at initialization.
double population_loss(const TrainState& state, const Dataset& data, const TrainConfig& config);

// Epoch order for (seed, epoch).
std::vector<int> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

void write_loss_csv(const TrainState& state, std::ostream& out);

Checkpoint to_checkpoint(const TrainState& state, const std::vector<std::string>& ids, const std::string& manifest_hash,
                         const std::string& config_json);
TrainState from_checkpoint(const Checkpoint& ckpt);

}  // namespace lcm
