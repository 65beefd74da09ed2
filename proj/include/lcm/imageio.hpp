#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lcm/degrade.hpp"
#include "lcm/nets.hpp"
#include "lcm/tensor.hpp"

namespace lcm {

// Interleaved 8-bit pixels.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<std::uint8_t> pixels;
};

// Reads 8-bit grayscale or RGB PNGs (palette and alpha are flattened).
// Throws IoError when unreadable, FormatError for 16-bit data.
Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

// 1 x C x H x W tensor with values v / 255, bilinearly resized to the target
// extents; axes are scaled independently.
Tensor<Real> load_image(const std::filesystem::path& path, const MapShape& target);
// Values are clamped to [0, 1] and written as round(v * 255).
void save_image(const Tensor<Real>& x, const std::filesystem::path& path);

Tensor<Real> image_to_tensor(const Image8& img);
Image8 tensor_to_image(const Tensor<Real>& x);
std::uint8_t quantize(double v);

// Half-pixel-centred bilinear resampling of each plane.
Tensor<Real> resize_bilinear(const Tensor<Real>& x, int h, int w);

// Single-channel PNG, 0 = missing, 255 = known.
Mask load_mask(const std::filesystem::path& path);
void save_mask(const Mask& mask, const std::filesystem::path& path);

}  // namespace lcm
