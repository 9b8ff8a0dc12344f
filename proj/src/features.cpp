#include "flowcut/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "flowcut/flow.hpp"

namespace flowcut {

namespace {

// Mirror (reflect-101) index for p in [-1, n]: -1 -> 1, n -> n-2.
inline int mirror(int p, int n) {
  if (p < 0) return n > 1 ? -p : 0;
  if (p >= n) return n > 1 ? 2 * n - 2 - p : 0;
  return p;
}

}  // namespace

FeatureGrid featurize(const Frame& image, int patch_size) {
  PatchGrid grid = PatchGrid::for_frame(image.height, image.width, patch_size);
  std::vector<double> lum = to_luminance(image);
  const int ps = patch_size;
  const int n_px = ps * ps;

  FeatureGrid out(grid.rows, grid.cols, kDescriptorDim);
  std::vector<double> patch_lum(static_cast<size_t>(n_px));

  for (int pr = 0; pr < grid.rows; ++pr) {
    for (int pc = 0; pc < grid.cols; ++pc) {
      std::span<double> d = out.at(pr, pc);
      int y0 = pr * ps, x0 = pc * ps;

      double sum[3] = {0, 0, 0}, sumsq[3] = {0, 0, 0};
      double lmin = 1.0, lmax = 0.0;
      for (int y = 0; y < ps; ++y) {
        for (int x = 0; x < ps; ++x) {
          for (int c = 0; c < 3; ++c) {
            double v = image.at(y0 + y, x0 + x, c);
            sum[c] += v;
            sumsq[c] += v * v;
          }
          double l = lum[static_cast<size_t>(y0 + y) * image.width + (x0 + x)];
          patch_lum[static_cast<size_t>(y) * ps + x] = l;
          lmin = std::min(lmin, l);
          lmax = std::max(lmax, l);
        }
      }
      for (int c = 0; c < 3; ++c) {
        double mean = sum[c] / n_px;
        d[c] = mean;
        d[3 + c] = std::sqrt(std::max(0.0, sumsq[c] / n_px - mean * mean));
      }

      double bins[4] = {0, 0, 0, 0};
      double mag_sum = 0.0;
      for (int y = 0; y < ps; ++y) {
        for (int x = 0; x < ps; ++x) {
          double gx = (patch_lum[static_cast<size_t>(y) * ps + mirror(x + 1, ps)] -
                       patch_lum[static_cast<size_t>(y) * ps + mirror(x - 1, ps)]) / 2.0;
          double gy = (patch_lum[static_cast<size_t>(mirror(y + 1, ps)) * ps + x] -
                       patch_lum[static_cast<size_t>(mirror(y - 1, ps)) * ps + x]) / 2.0;
          double mag = std::hypot(gx, gy);
          mag_sum += mag;
          if (mag > 0.0) {
            double ang = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
            ang = std::fmod(ang + 360.0, 180.0);  // orientation, not direction
            int bin = static_cast<int>(std::lround(ang / 45.0)) % 4;
            bins[bin] += mag;
          }
        }
      }
      double total = bins[0] + bins[1] + bins[2] + bins[3];
      if (total > 1e-12)
        for (int b = 0; b < 4; ++b) d[6 + b] = bins[b] / total;
      d[10] = mag_sum / n_px;
      d[11] = lmax - lmin;
    }
  }
  return out;
}

namespace {

void put_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw std::runtime_error("truncated FGRD: " + path.string());
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_fgrd(const FeatureGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write("FGRD", 4);
  put_u32(out, static_cast<uint32_t>(grid.rows));
  put_u32(out, static_cast<uint32_t>(grid.cols));
  put_u32(out, static_cast<uint32_t>(grid.dim));
  for (double v : grid.data) {
    float f = static_cast<float>(v);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

FeatureGrid read_fgrd(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "FGRD", 4) != 0)
    throw std::runtime_error("bad FGRD magic in " + path.string());
  int32_t rows = static_cast<int32_t>(get_u32(in, path));
  int32_t cols = static_cast<int32_t>(get_u32(in, path));
  int32_t dim = static_cast<int32_t>(get_u32(in, path));
  if (rows <= 0 || cols <= 0 || dim <= 0 ||
      static_cast<int64_t>(rows) * cols * dim > (1ll << 28))
    throw std::runtime_error("bad FGRD dimensions in " + path.string());
  FeatureGrid grid(rows, cols, dim);
  for (double& v : grid.data) {
    uint32_t bits = get_u32(in, path);
    float f;
    std::memcpy(&f, &bits, 4);
    v = f;
  }
  char extra;
  if (in.read(&extra, 1); in.gcount() != 0)
    throw std::runtime_error("trailing bytes in FGRD: " + path.string());
  return grid;
}

}  // namespace flowcut
