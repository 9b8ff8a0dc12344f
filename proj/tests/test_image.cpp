#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "flowcut/image.hpp"
#include "flowcut/rng.hpp"

using namespace flowcut;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  fs::path dir = fs::temp_directory_path() / (std::string("flowcut_img_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Frame random_frame(int h, int w, uint64_t seed) {
  Frame f(h, w);
  SplitMix64 rng(seed);
  for (double& v : f.pixels) v = rng.next_double();
  return f;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("ppm round trip is identity on quantized content") {
  auto dir = temp_dir("ppm");
  Frame f = random_frame(13, 7, 1);
  write_ppm(f, dir / "a.ppm");
  Frame g = read_ppm(dir / "a.ppm");
  REQUIRE(g.height == 13);
  REQUIRE(g.width == 7);
  write_ppm(g, dir / "b.ppm");
  CHECK(slurp(dir / "a.ppm") == slurp(dir / "b.ppm"));
  // Quantized values come back exactly.
  Frame q = f;
  for (double& v : q.pixels) v = quantize_byte(v) / 255.0;
  CHECK(g.pixels == q.pixels);
}

TEST_CASE("pgm masks round trip") {
  auto dir = temp_dir("pgm");
  BinaryMask m(8, 8);
  for (auto& v : m.values) v = 1;
  write_pgm(m, dir / "m.pgm");
  BinaryMask r = read_pgm(dir / "m.pgm");
  CHECK(r.values == m.values);

  SplitMix64 rng(3);
  BinaryMask rnd(9, 5);
  for (auto& v : rnd.values) v = rng.next() & 1;
  write_pgm(rnd, dir / "r.pgm");
  CHECK(read_pgm(dir / "r.pgm").values == rnd.values);
}

TEST_CASE("soft mask quantization rounds half up") {
  auto dir = temp_dir("quant");
  SoftMask s(1, 3);
  s.values = {0.5, 0.0, 1.0};
  write_pgm(s, dir / "s.pgm");
  auto bytes = slurp(dir / "s.pgm");
  // Header "P5\n3 1\n255\n" is 11 bytes, then 3 payload bytes.
  REQUIRE(bytes.size() == 14);
  CHECK(static_cast<unsigned char>(bytes[11]) == 128);  // round(127.5) half-up
  CHECK(static_cast<unsigned char>(bytes[12]) == 0);
  CHECK(static_cast<unsigned char>(bytes[13]) == 255);
}

TEST_CASE("load_sequence reads sorted frames and masks") {
  auto dir = temp_dir("seq");
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "gt");
  for (int i = 0; i < 3; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "%05d", i);
    Frame f(4, 6);
    for (double& v : f.pixels) v = i / 3.0;
    write_ppm(f, dir / "frames" / (std::string(name) + ".ppm"));
    BinaryMask m(4, 6);
    m.at(0, 0) = 1;
    write_pgm(m, dir / "gt" / (std::string(name) + ".pgm"));
  }
  VideoSequence seq = load_sequence(dir, true);
  REQUIRE(seq.frames.size() == 3);
  REQUIRE(seq.gt_masks.size() == 3);
  CHECK(seq.frames[1].at(0, 0, 0) == doctest::Approx(85 / 255.0));
  CHECK(seq.gt_masks[0].at(0, 0) == 1);
  CHECK(seq.gt_masks[0].at(1, 1) == 0);

  SUBCASE("pgm threshold: 255 foreground, 0 background") {
    CHECK(seq.gt_masks[2].foreground_count() == 1);
  }
}

TEST_CASE("load_sequence error paths") {
  auto dir = temp_dir("seqerr");
  CHECK_THROWS(load_sequence(dir / "absent", false));

  fs::create_directories(dir / "frames");
  write_ppm(Frame(4, 4), dir / "frames" / "00000.ppm");
  fs::create_directories(dir / "gt");
  write_pgm(BinaryMask(4, 3), dir / "gt" / "00000.pgm");  // wrong width
  CHECK_THROWS_WITH_AS(load_sequence(dir, true),
                       doctest::Contains("dimension mismatch"), std::runtime_error);

  SUBCASE("bad magic") {
    std::ofstream out(dir / "frames" / "00001.ppm", std::ios::binary);
    out << "P3\n4 4\n255\n";
    out.close();
    CHECK_THROWS(load_sequence(dir, false));
  }
  SUBCASE("truncated payload") {
    std::ofstream out(dir / "frames" / "00001.ppm", std::ios::binary);
    out << "P6\n4 4\n255\n";
    out << "xx";
    out.close();
    CHECK_THROWS_WITH_AS(read_ppm(dir / "frames" / "00001.ppm"),
                         doctest::Contains("truncated"), std::runtime_error);
  }
}

TEST_CASE("upsample_patch_mask") {
  SUBCASE("single patch fills the frame") {
    PatchGrid g{8, 1, 1};
    BinaryMask m = upsample_patch_mask({1}, g, 8, 8);
    CHECK(m.foreground_count() == 64);
  }
  SUBCASE("2x1 grid splits rows") {
    PatchGrid g{4, 2, 1};
    BinaryMask m = upsample_patch_mask({1, 0}, g, 8, 4);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 4; ++x) CHECK(m.at(y, x) == (y < 4 ? 1 : 0));
  }
  SUBCASE("remainder columns copy the rightmost patch") {
    PatchGrid g = PatchGrid::for_frame(4, 10, 4);  // 1 row, 2 cols, 2 px remainder
    REQUIRE(g.cols == 2);
    BinaryMask m = upsample_patch_mask({0, 1}, g, 4, 10);
    for (int y = 0; y < 4; ++y) {
      CHECK(m.at(y, 3) == 0);
      CHECK(m.at(y, 4) == 1);
      CHECK(m.at(y, 8) == 1);
      CHECK(m.at(y, 9) == 1);
    }
  }
}

TEST_CASE("binarize") {
  SoftMask s(1, 3);
  s.values = {0.4, 0.5, 0.6};
  BinaryMask b = binarize(s, 0.5);
  CHECK(b.values == std::vector<uint8_t>{0, 1, 1});

  SoftMask zero(2, 2);
  CHECK(binarize(zero, 0.5).foreground_count() == 0);
  SoftMask one(2, 2, 1.0);
  CHECK(binarize(one, 0.5).foreground_count() == 4);

  CHECK_THROWS(binarize(s, 0.0));
  CHECK_THROWS(binarize(s, 1.0));
}

TEST_CASE("binarize is monotone in the threshold") {
  SplitMix64 rng(9);
  SoftMask s(16, 16);
  for (double& v : s.values) v = rng.next_double();
  double t1 = 0.3, t2 = 0.7;
  BinaryMask lo = binarize(s, t1), hi = binarize(s, t2);
  for (size_t i = 0; i < s.values.size(); ++i)
    if (hi.values[i]) CHECK(lo.values[i]);  // raising tau never adds pixels
}
