#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowcut/image.hpp"

namespace flowcut {

enum class ObjectShape { kRectangle, kEllipse };

// Texture of one region. Flat is a single color; checker alternates two
// colors in period x period cells; noise is a seeded stationary block-noise
// field (per-channel, 4 px blocks). Foreground textures are sampled in
// object-local coordinates so they travel with the object; background
// textures are anchored to the frame.
struct Texture {
  enum class Kind { kFlat, kChecker, kNoise };
  Kind kind = Kind::kFlat;
  std::array<double, 3> color{0.5, 0.5, 0.5};                 // flat
  int period = 4;                                             // checker
  std::array<std::array<double, 3>, 2> colors{{{0, 0, 0}, {1, 1, 1}}};
  uint64_t seed = 0;                                          // noise
  double amplitude = 0.5;
};

struct SynthSpec {
  int height = 128;
  int width = 256;
  int n_frames = 10;
  ObjectShape object_shape = ObjectShape::kRectangle;
  int object_size = 64;  // bounding box side
  double vel_x = 2.0, vel_y = 1.0;
  // Top-left of the object's bounding box at frame 0. Defaults to centering
  // the whole trajectory in the frame.
  std::optional<std::array<double, 2>> origin;
  Texture fg_texture;
  Texture bg_texture;
  bool same_texture = false;
  double noise_sigma = 0.0;  // additive per-frame Gaussian sensor noise
  uint64_t seed = 0;

  static SynthSpec from_json_file(const std::filesystem::path& path);
  static SynthSpec from_json_text(const std::string& text);
};

// Deterministic synthetic sequence with exact ground truth. Throws if the
// object would leave the frame or n_frames < 5.
VideoSequence generate(const SynthSpec& spec);

// Flips a seeded-random erase_fraction of foreground pixels to background
// in a seeded-random frame_fraction of frames.
std::vector<BinaryMask> corrupt_masks(const std::vector<BinaryMask>& masks,
                                      double erase_fraction,
                                      double frame_fraction, uint64_t seed);

}  // namespace flowcut
