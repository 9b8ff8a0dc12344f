#include "flowcut/image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

namespace flowcut {

namespace fs = std::filesystem;

size_t BinaryMask::foreground_count() const {
  size_t n = 0;
  for (uint8_t v : values) n += v != 0;
  return n;
}

PatchGrid PatchGrid::for_frame(int height, int width, int patch_size) {
  if (patch_size <= 0) throw std::invalid_argument("patch size must be positive");
  PatchGrid g;
  g.patch_size = patch_size;
  g.rows = height / patch_size;
  g.cols = width / patch_size;
  if (g.rows < 1 || g.cols < 1)
    throw std::invalid_argument("frame smaller than one patch");
  return g;
}

namespace {

// Reads one header token, skipping whitespace and '#' comment lines.
std::string next_token(std::istream& in, const fs::path& path) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (tok.empty())
    throw std::runtime_error("truncated netpbm header: " + path.string());
  return tok;
}

struct PnmHeader {
  int width = 0;
  int height = 0;
};

PnmHeader read_header(std::istream& in, const char* magic, const fs::path& path) {
  std::string m = next_token(in, path);
  if (m != magic)
    throw std::runtime_error("bad magic '" + m + "' (want " + magic + "): " + path.string());
  PnmHeader h;
  h.width = std::stoi(next_token(in, path));
  h.height = std::stoi(next_token(in, path));
  int maxval = std::stoi(next_token(in, path));
  if (h.width <= 0 || h.height <= 0)
    throw std::runtime_error("bad dimensions in " + path.string());
  if (maxval != 255)
    throw std::runtime_error("unsupported maxval (want 255): " + path.string());
  // The single whitespace byte after maxval was consumed by next_token.
  return h;
}

std::vector<uint8_t> read_payload(std::istream& in, size_t n, const fs::path& path) {
  std::vector<uint8_t> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw std::runtime_error("truncated payload: " + path.string());
  return bytes;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  return in;
}

}  // namespace

void write_ppm(const Frame& frame, const fs::path& path) {
  auto out = open_out(path);
  out << "P6\n" << frame.width << " " << frame.height << "\n255\n";
  std::vector<uint8_t> bytes(frame.pixels.size());
  for (size_t i = 0; i < frame.pixels.size(); ++i) bytes[i] = quantize_byte(frame.pixels[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Frame read_ppm(const fs::path& path) {
  auto in = open_in(path);
  PnmHeader h = read_header(in, "P6", path);
  auto bytes = read_payload(in, 3ull * h.width * h.height, path);
  Frame frame(h.height, h.width);
  for (size_t i = 0; i < bytes.size(); ++i) frame.pixels[i] = bytes[i] / 255.0;
  return frame;
}

void write_pgm(const BinaryMask& mask, const fs::path& path) {
  auto out = open_out(path);
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  std::vector<uint8_t> bytes(mask.values.size());
  for (size_t i = 0; i < mask.values.size(); ++i) bytes[i] = mask.values[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_pgm(const SoftMask& mask, const fs::path& path) {
  auto out = open_out(path);
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  std::vector<uint8_t> bytes(mask.values.size());
  for (size_t i = 0; i < mask.values.size(); ++i) bytes[i] = quantize_byte(mask.values[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

BinaryMask read_pgm(const fs::path& path) {
  auto in = open_in(path);
  PnmHeader h = read_header(in, "P5", path);
  auto bytes = read_payload(in, static_cast<size_t>(h.width) * h.height, path);
  BinaryMask mask(h.height, h.width);
  for (size_t i = 0; i < bytes.size(); ++i) mask.values[i] = bytes[i] > 127 ? 1 : 0;
  return mask;
}

VideoSequence load_sequence(const fs::path& dir, bool with_gt) {
  fs::path frames_dir = dir / "frames";
  if (!fs::is_directory(frames_dir))
    throw std::runtime_error("missing frames directory: " + frames_dir.string());

  std::vector<fs::path> frame_paths;
  for (const auto& entry : fs::directory_iterator(frames_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm")
      frame_paths.push_back(entry.path());
  std::sort(frame_paths.begin(), frame_paths.end());
  if (frame_paths.empty())
    throw std::runtime_error("no .ppm frames in " + frames_dir.string());

  VideoSequence seq;
  seq.name = dir.filename().string();
  for (const auto& p : frame_paths) {
    Frame f = read_ppm(p);
    if (!seq.frames.empty() &&
        (f.height != seq.frames.front().height || f.width != seq.frames.front().width))
      throw std::runtime_error("frame dimension mismatch: " + p.string());
    seq.frames.push_back(std::move(f));
  }

  if (with_gt) {
    fs::path gt_dir = dir / "gt";
    if (!fs::is_directory(gt_dir))
      throw std::runtime_error("missing gt directory: " + gt_dir.string());
    for (const auto& p : frame_paths) {
      fs::path mp = gt_dir / p.stem();
      mp += ".pgm";
      BinaryMask m = read_pgm(mp);
      if (m.height != seq.frames.front().height || m.width != seq.frames.front().width)
        throw std::runtime_error("mask dimension mismatch: " + mp.string());
      seq.gt_masks.push_back(std::move(m));
    }
  }
  return seq;
}

BinaryMask upsample_patch_mask(const std::vector<uint8_t>& patch_values,
                               const PatchGrid& grid, int height, int width) {
  if (patch_values.size() != static_cast<size_t>(grid.count()))
    throw std::invalid_argument("patch_values size does not match grid");
  BinaryMask mask(height, width);
  for (int y = 0; y < height; ++y) {
    int pr = std::min(y / grid.patch_size, grid.rows - 1);
    for (int x = 0; x < width; ++x) {
      int pc = std::min(x / grid.patch_size, grid.cols - 1);
      mask.at(y, x) = patch_values[static_cast<size_t>(pr) * grid.cols + pc];
    }
  }
  return mask;
}

BinaryMask binarize(const SoftMask& mask, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("binarize threshold must lie in (0,1)");
  BinaryMask out(mask.height, mask.width);
  for (size_t i = 0; i < mask.values.size(); ++i)
    out.values[i] = mask.values[i] >= threshold ? 1 : 0;
  return out;
}

}  // namespace flowcut
