#pragma once

#include <filesystem>
#include <vector>

#include "flowcut/image.hpp"

namespace flowcut {

// Dense motion field in pixels/frame. u is +x (rightward), v is +y (downward).
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<double> u, v;

  FlowField() = default;
  FlowField(int h, int w)
      : height(h), width(w), u(static_cast<size_t>(h) * w, 0.0), v(static_cast<size_t>(h) * w, 0.0) {}

  size_t index(int y, int x) const { return static_cast<size_t>(y) * width + x; }
};

struct HSConfig {
  double smoothness = 0.25;  // regularization weight in 0-1 intensity units
  int n_iters = 200;         // Jacobi iterations per warp
  int n_levels = 2;          // pyramid levels (factor 2)
  int warps_per_level = 3;

  void validate() const;
};

// Coarse-to-fine Horn-Schunck on luminance (0.299 R + 0.587 G + 0.114 B).
// Returns flow such that f1(x) ~ f2(x + flow(x)). Deterministic.
FlowField horn_schunck(const Frame& f1, const Frame& f2, const HSConfig& cfg);

// Color-wheel rendering: hue = atan2(v,u), saturation = min(1, mag/max_mag),
// value = 1. max_mag <= 0 selects the field's max magnitude (floored at 1e-6).
Frame flow_to_rgb(const FlowField& flow, double max_mag = 0.0);

// Backward warp: output(x,y) samples mask at (x + u, y + v) bilinearly with
// coordinates clamped to the image rectangle. flow_bwd must be the flow from
// the target frame to the frame the mask lives in.
SoftMask warp_mask(const SoftMask& mask, const FlowField& flow_bwd);

// Adjoint of warp_mask in the mask argument: scatters upstream gradients
// back through the bilinear weights. Needed to train through the warp.
SoftMask warp_mask_grad(const SoftMask& upstream, const FlowField& flow_bwd);

// Middlebury .flo: float32 tag 202021.25, int32 width/height, interleaved
// (u,v) float32, all little-endian.
void write_flo(const FlowField& flow, const std::filesystem::path& path);
FlowField read_flo(const std::filesystem::path& path);

std::vector<double> to_luminance(const Frame& frame);

}  // namespace flowcut
