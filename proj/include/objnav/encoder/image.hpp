#pragma once

#include <filesystem>
#include <vector>

#include "objnav/autodiff/graph.hpp"

namespace objnav::encoder {

// Planar RGB image, channel-major (3 x H x W), values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> planar;

  Image() = default;
  Image(int h, int w) : height(h), width(w), planar(static_cast<std::size_t>(3 * h * w), 0.0) {}

  double& at(int c, int y, int x) { return planar[static_cast<std::size_t>((c * height + y) * width + x)]; }
  double at(int c, int y, int x) const { return planar[static_cast<std::size_t>((c * height + y) * width + x)]; }
};

// Binary (P6) or ASCII (P3) PPM with maxval <= 255.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

// N x (3 p^2) matrix of flattened patches in raster order; each row is
// channel-major within the patch. Throws ContractError if H or W is not a
// multiple of the patch size.
ad::Matrix patchify(const Image& image, int patch_size);

}  // namespace objnav::encoder
