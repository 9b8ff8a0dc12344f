#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace flowcut {

// RGB frame with channel values in [0,1], row-major H x W x 3.
struct Frame {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Frame() = default;
  Frame(int h, int w) : height(h), width(w), pixels(3ull * h * w, 0.0) {}

  double& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
};

// Per-pixel foreground flags, row-major.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> values;  // 0 or 1

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), values(static_cast<size_t>(h) * w, 0) {}

  uint8_t& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
  size_t foreground_count() const;
};

// Per-pixel foreground scores in [0,1].
struct SoftMask {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  SoftMask() = default;
  SoftMask(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}

  double& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
};

struct VideoSequence {
  std::string name;
  std::vector<Frame> frames;
  std::vector<BinaryMask> gt_masks;  // empty when ground truth is absent

  bool has_gt() const { return !gt_masks.empty(); }
};

// Division of a frame into non-overlapping patch_size x patch_size squares.
// Remainder strips (when patch_size does not divide H or W) are not covered
// by any patch; upsample_patch_mask fills them from the nearest patch.
struct PatchGrid {
  int patch_size = 0;
  int rows = 0;
  int cols = 0;

  static PatchGrid for_frame(int height, int width, int patch_size);
  int count() const { return rows * cols; }
};

// --- netpbm I/O (binary P6/P5, maxval 255, bit-exact) ---

void write_ppm(const Frame& frame, const std::filesystem::path& path);
Frame read_ppm(const std::filesystem::path& path);

void write_pgm(const BinaryMask& mask, const std::filesystem::path& path);
void write_pgm(const SoftMask& mask, const std::filesystem::path& path);
BinaryMask read_pgm(const std::filesystem::path& path);  // byte > 127 -> foreground

// Loads `<dir>/frames/*.ppm` sorted by filename; with_gt additionally loads
// `<dir>/gt/<same stem>.pgm` for every frame.
VideoSequence load_sequence(const std::filesystem::path& dir, bool with_gt);

// Nearest-neighbor upsampling of a patch-level mask to pixel resolution.
// patch_values is rows*cols row-major.
BinaryMask upsample_patch_mask(const std::vector<uint8_t>& patch_values,
                               const PatchGrid& grid, int height, int width);

// value >= threshold -> foreground. threshold must lie in (0,1).
BinaryMask binarize(const SoftMask& mask, double threshold);

// Round-half-up quantization used by every byte-valued writer.
inline uint8_t quantize_byte(double v) {
  double b = std::floor(v * 255.0 + 0.5);
  if (b < 0.0) b = 0.0;
  if (b > 255.0) b = 255.0;
  return static_cast<uint8_t>(b);
}

}  // namespace flowcut
