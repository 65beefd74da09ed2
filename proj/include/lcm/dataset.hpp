#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lcm/nets.hpp"
#include "lcm/tensor.hpp"

namespace lcm {

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest root
  MapShape shape;
};

// Ordered image list; entry order defines the latent index.
struct DatasetManifest {
  static constexpr int kVersion = 1;

  std::string root;
  std::vector<ManifestEntry> entries;

  void validate() const;
  // FNV-1a over the ordered (id, path, shape) triples, hex encoded.
  std::string hash() const;
  std::string to_json_text() const;

  // A relative root is resolved against the manifest's directory.
  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::filesystem::path resolve(const ManifestEntry& e, const std::filesystem::path& manifest_dir = {}) const;
};

struct Dataset {
  std::vector<std::string> ids;
  std::vector<Tensor<Real>> images;  // each 1 x C x H x W
  MapShape shape;

  std::size_t size() const { return images.size(); }
  // Stacks the selected images into one N x C x H x W batch.
  Tensor<Real> batch(const std::vector<int>& indices) const;
  Tensor<Real> mean_image() const;
  Dataset subset(int begin, int end) const;
};

Dataset load_dataset(const DatasetManifest& manifest, const std::filesystem::path& manifest_dir = {});

// Procedural "face" images: gradient background, soft ellipse, two eyes and
// a mouth bar with per-image random geometry and colours.
Dataset make_toy_dataset(int count, int size, std::uint64_t seed);
Tensor<Real> make_toy_image(int size, std::uint64_t seed, std::uint64_t index);

// Writes <dir>/<id>.png for every image and returns the matching manifest.
DatasetManifest write_dataset(const Dataset& data, const std::filesystem::path& dir);

struct ScanResult {
  DatasetManifest manifest;
  int skipped = 0;
};

// Every decodable *.png in sorted filename order; other files are skipped.
ScanResult scan_directory(const std::filesystem::path& dir, const MapShape& shape);

std::string fnv1a_hex(const std::string& text);

}  // namespace lcm
