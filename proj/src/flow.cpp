#include "flowcut/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace flowcut {

namespace {

constexpr float kFloMagic = 202021.25f;

struct Plane {
  int height = 0, width = 0;
  std::vector<double> data;
  Plane() = default;
  Plane(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w, 0.0) {}
  double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
};

// Bilinear resize with pixel-center alignment.
Plane resize(const Plane& src, int nh, int nw) {
  Plane dst(nh, nw);
  double sy = static_cast<double>(src.height) / nh;
  double sx = static_cast<double>(src.width) / nw;
  for (int y = 0; y < nh; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, src.height - 1);
    double wy = fy - y0;
    for (int x = 0; x < nw; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, src.width - 1);
      double wx = fx - x0;
      dst.at(y, x) = (1 - wy) * ((1 - wx) * src.at(y0, x0) + wx * src.at(y0, x1)) +
                     wy * ((1 - wx) * src.at(y1, x0) + wx * src.at(y1, x1));
    }
  }
  return dst;
}

double sample_clamped(const Plane& img, double x, double y) {
  x = std::clamp(x, 0.0, img.width - 1.0);
  y = std::clamp(y, 0.0, img.height - 1.0);
  int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  double fx = x - x0, fy = y - y0;
  return (1 - fy) * ((1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
         fy * ((1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1));
}

// Central differences, replicated border.
void gradients(const Plane& img, Plane& gx, Plane& gy) {
  int h = img.height, w = img.width;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
      int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
      gx.at(y, x) = (img.at(y, xp) - img.at(y, xm)) / 2.0;
      gy.at(y, x) = (img.at(yp, x) - img.at(ym, x)) / 2.0;
    }
  }
}

double neighbor_avg(const Plane& f, int y, int x) {
  int h = f.height, w = f.width;
  int ym = y > 0 ? y - 1 : std::min(1, h - 1);
  int yp = y < h - 1 ? y + 1 : std::max(h - 2, 0);
  int xm = x > 0 ? x - 1 : std::min(1, w - 1);
  int xp = x < w - 1 ? x + 1 : std::max(w - 2, 0);
  return (f.at(ym, x) + f.at(yp, x) + f.at(y, xm) + f.at(y, xp)) / 4.0;
}

}  // namespace

void HSConfig::validate() const {
  if (smoothness <= 0 || n_iters <= 0 || n_levels <= 0 || warps_per_level <= 0)
    throw std::invalid_argument("HSConfig fields must all be positive");
}

std::vector<double> to_luminance(const Frame& frame) {
  std::vector<double> lum(static_cast<size_t>(frame.height) * frame.width);
  for (size_t i = 0; i < lum.size(); ++i) {
    const double* p = &frame.pixels[i * 3];
    lum[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return lum;
}

FlowField horn_schunck(const Frame& f1, const Frame& f2, const HSConfig& cfg) {
  cfg.validate();
  if (f1.height != f2.height || f1.width != f2.width)
    throw std::invalid_argument("horn_schunck: frame dimensions differ");

  Plane g1(f1.height, f1.width), g2(f1.height, f1.width);
  g1.data = to_luminance(f1);
  g2.data = to_luminance(f2);

  // Pyramid, level 0 = full resolution.
  std::vector<std::pair<Plane, Plane>> pyr;
  pyr.reserve(cfg.n_levels);
  pyr.emplace_back(std::move(g1), std::move(g2));
  for (int l = 1; l < cfg.n_levels; ++l) {
    const auto& prev = pyr.back();
    int nh = std::max(2, (prev.first.height + 1) / 2);
    int nw = std::max(2, (prev.first.width + 1) / 2);
    pyr.emplace_back(resize(prev.first, nh, nw), resize(prev.second, nh, nw));
  }

  Plane u(pyr.back().first.height, pyr.back().first.width);
  Plane v(pyr.back().first.height, pyr.back().first.width);

  for (int l = cfg.n_levels - 1; l >= 0; --l) {
    const Plane& p1 = pyr[l].first;
    const Plane& p2 = pyr[l].second;
    int h = p1.height, w = p1.width;
    if (u.height != h || u.width != w) {
      double ry = static_cast<double>(h) / u.height;
      double rx = static_cast<double>(w) / u.width;
      Plane nu = resize(u, h, w), nv = resize(v, h, w);
      for (auto& val : nu.data) val *= rx;
      for (auto& val : nv.data) val *= ry;
      u = std::move(nu);
      v = std::move(nv);
    }

    for (int warp = 0; warp < cfg.warps_per_level; ++warp) {
      // Relinearize the data term around the current flow.
      Plane p2w(h, w), ix(h, w), iy(h, w), it(h, w), avg(h, w);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          p2w.at(y, x) = sample_clamped(p2, x + u.at(y, x), y + v.at(y, x));
      for (size_t i = 0; i < avg.data.size(); ++i) {
        avg.data[i] = (p1.data[i] + p2w.data[i]) / 2.0;
        it.data[i] = p2w.data[i] - p1.data[i];
      }
      gradients(avg, ix, iy);

      Plane u0 = u, v0 = v;
      for (int iter = 0; iter < cfg.n_iters; ++iter) {
        Plane un(h, w), vn(h, w);
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            double ub = neighbor_avg(u, y, x);
            double vb = neighbor_avg(v, y, x);
            double gxv = ix.at(y, x), gyv = iy.at(y, x);
            double r = (gxv * (ub - u0.at(y, x)) + gyv * (vb - v0.at(y, x)) + it.at(y, x)) /
                       (cfg.smoothness + gxv * gxv + gyv * gyv);
            un.at(y, x) = ub - gxv * r;
            vn.at(y, x) = vb - gyv * r;
          }
        }
        u = std::move(un);
        v = std::move(vn);
      }
    }
  }

  FlowField flow(f1.height, f1.width);
  flow.u = std::move(u.data);
  flow.v = std::move(v.data);
  return flow;
}

Frame flow_to_rgb(const FlowField& flow, double max_mag) {
  if (max_mag <= 0.0) {
    for (size_t i = 0; i < flow.u.size(); ++i)
      max_mag = std::max(max_mag, std::hypot(flow.u[i], flow.v[i]));
    max_mag = std::max(max_mag, 1e-6);
  }
  Frame out(flow.height, flow.width);
  for (size_t i = 0; i < flow.u.size(); ++i) {
    double mag = std::hypot(flow.u[i], flow.v[i]);
    double hue = std::atan2(flow.v[i], flow.u[i]);
    if (hue < 0) hue += 2.0 * std::numbers::pi;
    hue *= 180.0 / std::numbers::pi;
    double sat = std::min(1.0, mag / max_mag);

    // Standard 6-sector HSV -> RGB with value = 1.
    double hp = hue / 60.0;
    double c = sat;
    double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double m = 1.0 - c;
    double r = 0, g = 0, b = 0;
    switch (std::min(5, static_cast<int>(hp))) {
      case 0: r = c; g = x; break;
      case 1: r = x; g = c; break;
      case 2: g = c; b = x; break;
      case 3: g = x; b = c; break;
      case 4: r = x; b = c; break;
      case 5: r = c; b = x; break;
    }
    out.pixels[i * 3 + 0] = r + m;
    out.pixels[i * 3 + 1] = g + m;
    out.pixels[i * 3 + 2] = b + m;
  }
  return out;
}

SoftMask warp_mask(const SoftMask& mask, const FlowField& flow_bwd) {
  if (mask.height != flow_bwd.height || mask.width != flow_bwd.width)
    throw std::invalid_argument("warp_mask: dimensions differ");
  SoftMask out(mask.height, mask.width);
  int h = mask.height, w = mask.width;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      size_t i = flow_bwd.index(y, x);
      double sx = std::clamp(x + flow_bwd.u[i], 0.0, w - 1.0);
      double sy = std::clamp(y + flow_bwd.v[i], 0.0, h - 1.0);
      int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
      int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      double fx = sx - x0, fy = sy - y0;
      out.at(y, x) = (1 - fy) * ((1 - fx) * mask.at(y0, x0) + fx * mask.at(y0, x1)) +
                     fy * ((1 - fx) * mask.at(y1, x0) + fx * mask.at(y1, x1));
    }
  }
  return out;
}

SoftMask warp_mask_grad(const SoftMask& upstream, const FlowField& flow_bwd) {
  if (upstream.height != flow_bwd.height || upstream.width != flow_bwd.width)
    throw std::invalid_argument("warp_mask_grad: dimensions differ");
  SoftMask grad(upstream.height, upstream.width);
  int h = upstream.height, w = upstream.width;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      size_t i = flow_bwd.index(y, x);
      double sx = std::clamp(x + flow_bwd.u[i], 0.0, w - 1.0);
      double sy = std::clamp(y + flow_bwd.v[i], 0.0, h - 1.0);
      int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
      int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      double fx = sx - x0, fy = sy - y0;
      double g = upstream.at(y, x);
      grad.at(y0, x0) += (1 - fy) * (1 - fx) * g;
      grad.at(y0, x1) += (1 - fy) * fx * g;
      grad.at(y1, x0) += fy * (1 - fx) * g;
      grad.at(y1, x1) += fy * fx * g;
    }
  }
  return grad;
}

namespace {

void put_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ofstream& out, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

uint32_t get_u32(std::ifstream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw std::runtime_error("truncated .flo: " + path.string());
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

float get_f32(std::ifstream& in, const std::filesystem::path& path) {
  uint32_t v = get_u32(in, path);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

}  // namespace

void write_flo(const FlowField& flow, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  put_f32(out, kFloMagic);
  put_u32(out, static_cast<uint32_t>(flow.width));
  put_u32(out, static_cast<uint32_t>(flow.height));
  for (size_t i = 0; i < flow.u.size(); ++i) {
    put_f32(out, static_cast<float>(flow.u[i]));
    put_f32(out, static_cast<float>(flow.v[i]));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

FlowField read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  float magic = get_f32(in, path);
  if (magic != kFloMagic)
    throw std::runtime_error("bad .flo magic in " + path.string());
  int32_t w = static_cast<int32_t>(get_u32(in, path));
  int32_t h = static_cast<int32_t>(get_u32(in, path));
  if (w <= 0 || h <= 0 || static_cast<int64_t>(w) * h > (1ll << 30))
    throw std::runtime_error("bad .flo dimensions in " + path.string());
  FlowField flow(h, w);
  for (size_t i = 0; i < flow.u.size(); ++i) {
    flow.u[i] = get_f32(in, path);
    flow.v[i] = get_f32(in, path);
  }
  // The payload must end exactly here.
  char extra;
  if (in.read(&extra, 1); in.gcount() != 0)
    throw std::runtime_error("trailing bytes in .flo: " + path.string());
  return flow;
}

}  // namespace flowcut
