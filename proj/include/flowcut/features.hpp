#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "flowcut/image.hpp"

namespace flowcut {

inline constexpr int kDescriptorDim = 12;

// One descriptor per patch, rows x cols x dim row-major.
struct FeatureGrid {
  int rows = 0;
  int cols = 0;
  int dim = 0;
  std::vector<double> data;

  FeatureGrid() = default;
  FeatureGrid(int r, int c, int d)
      : rows(r), cols(c), dim(d), data(static_cast<size_t>(r) * c * d, 0.0) {}

  std::span<const double> at(int r, int c) const {
    return {data.data() + (static_cast<size_t>(r) * cols + c) * dim, static_cast<size_t>(dim)};
  }
  std::span<double> at(int r, int c) {
    return {data.data() + (static_cast<size_t>(r) * cols + c) * dim, static_cast<size_t>(dim)};
  }
  int count() const { return rows * cols; }
};

// Handcrafted 12-d patch descriptor:
//   [0..2]  mean R, G, B
//   [3..5]  std R, G, B (population)
//   [6..9]  gradient-orientation histogram (bins 0/45/90/135 deg, magnitude
//           weighted, normalized to sum 1; all zero for flat patches)
//   [10]    mean gradient magnitude
//   [11]    luminance range (max - min)
// Gradients are central differences of luminance with reflective (mirror)
// boundaries inside the patch.
FeatureGrid featurize(const Frame& image, int patch_size);

// Raw little-endian tensor file so externally computed embeddings can stand
// in for the built-in featurizer: magic "FGRD", int32 rows/cols/dim, then
// rows*cols*dim float32.
void write_fgrd(const FeatureGrid& grid, const std::filesystem::path& path);
FeatureGrid read_fgrd(const std::filesystem::path& path);

}  // namespace flowcut
