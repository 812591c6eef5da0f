#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "owdetr/numerics/tensor.hpp"

namespace owdetr::data {

// 8-bit interleaved RGB image.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  friend bool operator==(const Raster&, const Raster&) = default;
};

// Binary PPM (P6, maxval 255).
void write_ppm(const Raster& raster, const std::filesystem::path& path);
Raster read_ppm(const std::filesystem::path& path);

// [3 x H x W] planar tensor with values v / 255.
numerics::Tensor to_tensor(const Raster& raster);

}  // namespace owdetr::data
