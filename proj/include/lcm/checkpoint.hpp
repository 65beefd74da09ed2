#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lcm/nets.hpp"

namespace lcm {

enum class ModelVariant { kLcm, kGloMap, kGloVector };

std::string variant_name(ModelVariant v);
ModelVariant parse_variant(const std::string& name);

// Everything needed to resume training or run restoration.
struct Checkpoint {
  ModelVariant variant = ModelVariant::kLcm;
  std::string preset;
  ArchSpec latent_arch;  // unused for GLO variants
  Tensor<Real> noise;    // LCM only
  GeneratorModel<Real> generator;
  int vector_dim = 0;
  double box = 0.01;  // latent box bound B
  std::vector<std::string> ids;
  std::vector<LatentCodec<Real>> codecs;  // LCM: one per id
  std::vector<GloLatent<Real>> glo;       // GLO: one per id
  std::string manifest_hash;
  std::string config_json = "{}";
  int epoch = 0;
};

// Little-endian layout:
//   "LCMK" | u32 version | u32 header length | UTF-8 JSON header |
//   f32 blobs in the order listed by the header.
inline constexpr char kCheckpointMagic[4] = {'L', 'C', 'M', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Number of 32-bit reals stored for the checkpoint's parameters.
std::size_t checkpoint_scalar_count(const Checkpoint& ckpt);

}  // namespace lcm
