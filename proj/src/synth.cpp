#include "flowcut/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "flowcut/rng.hpp"
#include "json.hpp"

namespace flowcut {

namespace {

// Block side of the noise texture. 4 px gives the texture a correlation
// length the coarse-to-fine flow solver can lock onto.
constexpr int kNoiseGrain = 4;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// seed_salt distinguishes the fg and bg noise fields when both use the same
// texture seed but same_texture is false.
std::array<double, 3> sample_texture(const Texture& tex, int64_t x, int64_t y,
                                     uint64_t seed_salt) {
  switch (tex.kind) {
    case Texture::Kind::kFlat:
      return tex.color;
    case Texture::Kind::kChecker: {
      int64_t k = ((x >= 0 ? x / tex.period : (x - tex.period + 1) / tex.period) +
                   (y >= 0 ? y / tex.period : (y - tex.period + 1) / tex.period)) & 1;
      return tex.colors[static_cast<size_t>(k)];
    }
    case Texture::Kind::kNoise: {
      int64_t bx = x >= 0 ? x / kNoiseGrain : (x - kNoiseGrain + 1) / kNoiseGrain;
      int64_t by = y >= 0 ? y / kNoiseGrain : (y - kNoiseGrain + 1) / kNoiseGrain;
      std::array<double, 3> c{};
      for (int ch = 0; ch < 3; ++ch) {
        double u = hash_coords_unit(tex.seed + seed_salt + 1000000007ull * ch, bx, by);
        c[ch] = 0.5 + tex.amplitude * (2.0 * u - 1.0);
      }
      return c;
    }
  }
  return {0, 0, 0};
}

}  // namespace

VideoSequence generate(const SynthSpec& spec) {
  if (spec.n_frames < 5)
    throw std::invalid_argument("n_frames must be at least 5");
  if (spec.object_size <= 0 || spec.object_size > std::min(spec.height, spec.width))
    throw std::invalid_argument("object_size does not fit the frame");

  double total_dx = (spec.n_frames - 1) * spec.vel_x;
  double total_dy = (spec.n_frames - 1) * spec.vel_y;
  double ox, oy;
  if (spec.origin) {
    ox = (*spec.origin)[0];
    oy = (*spec.origin)[1];
  } else {
    ox = (spec.width - spec.object_size) / 2.0 - total_dx / 2.0;
    oy = (spec.height - spec.object_size) / 2.0 - total_dy / 2.0;
  }

  for (int t = 0; t < spec.n_frames; ++t) {
    double px = ox + t * spec.vel_x, py = oy + t * spec.vel_y;
    if (px < 0 || py < 0 || px + spec.object_size > spec.width ||
        py + spec.object_size > spec.height)
      throw std::invalid_argument("object leaves the frame at frame " + std::to_string(t));
  }

  const Texture& fg = spec.same_texture ? spec.bg_texture : spec.fg_texture;
  const Texture& bg = spec.bg_texture;
  uint64_t fg_salt = spec.same_texture ? 0 : 1;

  VideoSequence seq;
  seq.name = "synthetic";
  double size = spec.object_size;
  for (int t = 0; t < spec.n_frames; ++t) {
    double px = ox + t * spec.vel_x, py = oy + t * spec.vel_y;
    Frame frame(spec.height, spec.width);
    BinaryMask gt(spec.height, spec.width);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        double cx = x + 0.5, cy = y + 0.5;
        bool inside;
        if (spec.object_shape == ObjectShape::kRectangle) {
          inside = cx >= px && cx < px + size && cy >= py && cy < py + size;
        } else {
          double r = size / 2.0;
          double dx = (cx - (px + r)) / r, dy = (cy - (py + r)) / r;
          inside = dx * dx + dy * dy <= 1.0;
        }
        std::array<double, 3> c =
            inside ? sample_texture(fg, static_cast<int64_t>(std::floor(cx - px)),
                                    static_cast<int64_t>(std::floor(cy - py)), fg_salt)
                   : sample_texture(bg, x, y, 0);
        for (int ch = 0; ch < 3; ++ch) frame.at(y, x, ch) = c[ch];
        gt.at(y, x) = inside ? 1 : 0;
      }
    }
    if (spec.noise_sigma > 0.0) {
      SplitMix64 rng(derive_seed(spec.seed, "sensor-noise-" + std::to_string(t)));
      for (double& v : frame.pixels)
        v = clamp01(v + spec.noise_sigma * rng.next_gaussian());
    }
    seq.frames.push_back(std::move(frame));
    seq.gt_masks.push_back(std::move(gt));
  }
  return seq;
}

std::vector<BinaryMask> corrupt_masks(const std::vector<BinaryMask>& masks,
                                      double erase_fraction,
                                      double frame_fraction, uint64_t seed) {
  std::vector<BinaryMask> out = masks;
  size_t n = masks.size();
  if (n == 0) return out;

  size_t n_corrupt = static_cast<size_t>(std::floor(frame_fraction * n + 0.5));
  n_corrupt = std::min(n_corrupt, n);

  SplitMix64 rng(derive_seed(seed, "corrupt-masks"));

  // Partial Fisher-Yates selects the corrupted frames.
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  for (size_t i = 0; i < n_corrupt; ++i) {
    size_t j = i + rng.next_index(n - i);
    std::swap(order[i], order[j]);
  }

  for (size_t k = 0; k < n_corrupt; ++k) {
    BinaryMask& mask = out[order[k]];
    std::vector<size_t> fg_idx;
    for (size_t i = 0; i < mask.values.size(); ++i)
      if (mask.values[i]) fg_idx.push_back(i);
    size_t n_erase = static_cast<size_t>(std::floor(erase_fraction * fg_idx.size() + 0.5));
    n_erase = std::min(n_erase, fg_idx.size());
    for (size_t i = 0; i < n_erase; ++i) {
      size_t j = i + rng.next_index(fg_idx.size() - i);
      std::swap(fg_idx[i], fg_idx[j]);
      mask.values[fg_idx[i]] = 0;
    }
  }
  return out;
}

namespace {

using nlohmann::json;

void require_keys(const json& j, std::initializer_list<const char*> known,
                  const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) { ok = true; break; }
    if (!ok) throw std::runtime_error("unknown key '" + it.key() + "' in " + where);
  }
}

std::array<double, 3> parse_color(const json& j) {
  if (!j.is_array() || j.size() != 3)
    throw std::runtime_error("color must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Texture parse_texture(const json& j) {
  Texture t;
  std::string type = j.at("type").get<std::string>();
  if (type == "flat") {
    require_keys(j, {"type", "color"}, "texture");
    t.kind = Texture::Kind::kFlat;
    t.color = parse_color(j.at("color"));
  } else if (type == "checker") {
    require_keys(j, {"type", "period", "colors"}, "texture");
    t.kind = Texture::Kind::kChecker;
    t.period = j.at("period").get<int>();
    if (t.period <= 0) throw std::runtime_error("checker period must be positive");
    const json& cols = j.at("colors");
    if (!cols.is_array() || cols.size() != 2)
      throw std::runtime_error("checker colors must be two colors");
    t.colors = {parse_color(cols[0]), parse_color(cols[1])};
  } else if (type == "noise") {
    require_keys(j, {"type", "seed", "amplitude"}, "texture");
    t.kind = Texture::Kind::kNoise;
    t.seed = j.at("seed").get<uint64_t>();
    t.amplitude = j.at("amplitude").get<double>();
  } else {
    throw std::runtime_error("unknown texture type '" + type + "'");
  }
  return t;
}

}  // namespace

SynthSpec SynthSpec::from_json_text(const std::string& text) {
  json j = json::parse(text);
  require_keys(j,
               {"height", "width", "n_frames", "object_shape", "object_size",
                "velocity", "origin", "fg_texture", "bg_texture", "same_texture",
                "noise_sigma", "seed"},
               "synth spec");
  SynthSpec s;
  s.height = j.at("height").get<int>();
  s.width = j.at("width").get<int>();
  s.n_frames = j.at("n_frames").get<int>();
  std::string shape = j.at("object_shape").get<std::string>();
  if (shape == "rectangle") s.object_shape = ObjectShape::kRectangle;
  else if (shape == "ellipse") s.object_shape = ObjectShape::kEllipse;
  else throw std::runtime_error("unknown object_shape '" + shape + "'");
  s.object_size = j.at("object_size").get<int>();
  const json& vel = j.at("velocity");
  if (!vel.is_array() || vel.size() != 2)
    throw std::runtime_error("velocity must be [vx, vy]");
  s.vel_x = vel[0].get<double>();
  s.vel_y = vel[1].get<double>();
  if (j.contains("origin")) {
    const json& o = j.at("origin");
    if (!o.is_array() || o.size() != 2)
      throw std::runtime_error("origin must be [x, y]");
    s.origin = std::array<double, 2>{o[0].get<double>(), o[1].get<double>()};
  }
  s.fg_texture = parse_texture(j.at("fg_texture"));
  s.bg_texture = parse_texture(j.at("bg_texture"));
  s.same_texture = j.value("same_texture", false);
  s.noise_sigma = j.value("noise_sigma", 0.0);
  s.seed = j.value("seed", 0ull);
  return s;
}

SynthSpec SynthSpec::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open spec: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

}  // namespace flowcut
