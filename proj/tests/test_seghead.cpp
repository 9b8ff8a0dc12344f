#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "flowcut/seghead.hpp"
#include "flowcut/synth.hpp"

using namespace flowcut;
namespace fs = std::filesystem;

namespace {

Frame random_frame(int h, int w, uint64_t seed) {
  Frame f(h, w);
  SplitMix64 rng(seed);
  for (double& v : f.pixels) v = rng.next_double();
  return f;
}

// Straight-line reimplementation of the head on a raw 5-channel input,
// independent of the library's loop structure. Used as the oracle for both
// correctness and the translation test.
struct OracleNet {
  const SegHead& head;

  static int mirror(int p, int n) {
    if (p < 0) return -p;
    if (p >= n) return 2 * n - 2 - p;
    return p;
  }

  std::vector<double> conv(const std::vector<double>& in, int ic, int oc, int h,
                           int w, const std::vector<double>& wt,
                           const std::vector<double>& bias) const {
    std::vector<double> out(static_cast<size_t>(oc) * h * w, 0.0);
    for (int o = 0; o < oc; ++o)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double s = bias[o];
          for (int i = 0; i < ic; ++i)
            for (int ky = -1; ky <= 1; ++ky)
              for (int kx = -1; kx <= 1; ++kx)
                s += wt[((static_cast<size_t>(o) * ic + i) * 3 + (ky + 1)) * 3 + (kx + 1)] *
                     in[static_cast<size_t>(i) * h * w +
                        static_cast<size_t>(mirror(y + ky, h)) * w + mirror(x + kx, w)];
          out[static_cast<size_t>(o) * h * w + static_cast<size_t>(y) * w + x] = s;
        }
    return out;
  }

  std::vector<double> run(std::vector<double> in, int h, int w) const {
    auto a1 = conv(in, 5, 16, h, w, head.w1, head.b1);
    for (double& v : a1) v = std::max(0.0, v);
    auto a2 = conv(a1, 16, 16, h, w, head.w2, head.b2);
    for (double& v : a2) v = std::max(0.0, v);
    auto z3 = conv(a2, 16, 1, h, w, head.w3, head.b3);
    for (double& v : z3) v = 1.0 / (1.0 + std::exp(-v));
    return z3;
  }
};

std::vector<double> five_channel_input(const Frame& f) {
  int h = f.height, w = f.width;
  size_t plane = static_cast<size_t>(h) * w;
  std::vector<double> in(plane * 5);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      size_t p = static_cast<size_t>(y) * w + x;
      for (int c = 0; c < 3; ++c) in[plane * c + p] = f.at(y, x, c);
      in[plane * 3 + p] = static_cast<double>(x) / w;
      in[plane * 4 + p] = static_cast<double>(y) / h;
    }
  return in;
}

}  // namespace

TEST_CASE("initialization is seeded, bounded, and bias-free") {
  SegHead a = seghead_init(42), b = seghead_init(42), c = seghead_init(43);
  CHECK(a.to_vector() == b.to_vector());
  CHECK(a.to_vector() != c.to_vector());
  CHECK(a.parameter_count() == 3201);

  double s1 = std::sqrt(1.0 / 45.0);
  for (double v : a.w1) {
    CHECK(v > -s1);
    CHECK(v < s1);
  }
  for (double v : a.b1) CHECK(v == 0.0);
  for (double v : a.b2) CHECK(v == 0.0);
  for (double v : a.b3) CHECK(v == 0.0);
}

TEST_CASE("zero-parameter head outputs one half everywhere") {
  SegHead head;  // all zeros
  Frame f = random_frame(10, 12, 3);
  SoftMask out = seghead_forward(head, f);
  CHECK(out.height == 10);
  CHECK(out.width == 12);
  for (double v : out.values) CHECK(v == 0.5);
}

TEST_CASE("forward output lies strictly inside (0,1)") {
  SegHead head = seghead_init(7);
  SoftMask out = seghead_forward(head, random_frame(12, 12, 5));
  for (double v : out.values) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("forward matches the direct oracle network") {
  SegHead head = seghead_init(11);
  Frame f = random_frame(9, 13, 6);
  SoftMask mine = seghead_forward(head, f);
  OracleNet oracle{head};
  std::vector<double> ref = oracle.run(five_channel_input(f), 9, 13);
  for (size_t i = 0; i < mine.values.size(); ++i)
    CHECK(mine.values[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("translation changes outputs only near the borders") {
  // Shift the image AND the coordinate channels by (2,1); away from the
  // reflect-padding border the output must shift along.
  SegHead head = seghead_init(13);
  int h = 20, w = 24, dy = 1, dx = 2;
  Frame f = random_frame(h, w, 8);
  std::vector<double> in = five_channel_input(f);
  size_t plane = static_cast<size_t>(h) * w;

  std::vector<double> shifted(plane * 5, 0.0);
  for (int c = 0; c < 5; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int sy = y - dy, sx = x - dx;
        if (sy < 0 || sx < 0) { sy = std::max(sy, 0); sx = std::max(sx, 0); }
        shifted[plane * c + static_cast<size_t>(y) * w + x] =
            in[plane * c + static_cast<size_t>(sy) * w + sx];
      }

  OracleNet oracle{head};
  std::vector<double> out = oracle.run(in, h, w);
  std::vector<double> out_shifted = oracle.run(shifted, h, w);

  int margin = 3;
  for (int y = margin + dy; y < h - margin; ++y)
    for (int x = margin + dx; x < w - margin; ++x) {
      double want = out[static_cast<size_t>(y - dy) * w + (x - dx)];
      double got = out_shifted[static_cast<size_t>(y) * w + x];
      CHECK(std::fabs(want - got) < 1e-6);
    }
}

TEST_CASE("l1 loss") {
  SoftMask a(2, 2, 0.5);
  BinaryMask t(2, 2);
  CHECK(l1_loss(a, a) == 0.0);
  CHECK(l1_loss(a, t) == doctest::Approx(0.5));
  SoftMask p(1, 2);
  p.values = {0.0, 1.0};
  SoftMask q(1, 2, 1.0);
  CHECK(l1_loss(p, q) == doctest::Approx(0.5));
  CHECK_THROWS(l1_loss(a, SoftMask(3, 3)));
}

TEST_CASE("backward: zero upstream gives zero gradient") {
  SegHead head = seghead_init(3);
  Frame f = random_frame(8, 8, 2);
  ForwardCache cache;
  seghead_forward(head, f, &cache);
  SoftMask zero(8, 8);
  auto grad = seghead_backward(head, cache, zero);
  for (double g : grad) CHECK(g == 0.0);
}

namespace {

// Central finite differences on 50 seeded parameter indices.
void check_gradients(bool warp_branch) {
  int h = 16, w = 16;
  SynthSpec spec;
  spec.height = h;
  spec.width = w;
  spec.n_frames = 5;
  spec.object_size = 6;
  spec.vel_x = 1;
  spec.vel_y = 0;
  spec.origin = {{2.0, 5.0}};
  spec.fg_texture.color = {0.9, 0.1, 0.1};
  spec.bg_texture.color = {0.1, 0.1, 0.9};
  spec.seed = 4;
  VideoSequence seq = generate(spec);
  const Frame& frame = seq.frames[0];
  const BinaryMask& target = seq.gt_masks[1];

  FlowField flow(h, w);
  if (warp_branch) {
    SplitMix64 rng(9);
    for (size_t i = 0; i < flow.u.size(); ++i) {
      flow.u[i] = 1.3 * (rng.next_double() - 0.5);
      flow.v[i] = -0.7 * (rng.next_double() - 0.5);
    }
  }

  SegHead head = seghead_init(21);
  std::vector<double> params = head.to_vector();

  auto loss_at = [&](const std::vector<double>& p) {
    SegHead hh;
    hh.from_vector(p);
    SoftMask pred = seghead_forward(hh, frame);
    if (warp_branch) return l1_loss(warp_mask(pred, flow), target);
    return l1_loss(pred, target);
  };

  ForwardCache cache;
  SoftMask pred = seghead_forward(head, frame, &cache);
  SoftMask upstream;
  if (warp_branch) {
    SoftMask warped = warp_mask(pred, flow);
    upstream = warp_mask_grad(l1_loss_grad(warped, target), flow);
  } else {
    upstream = l1_loss_grad(pred, target);
  }
  std::vector<double> grad = seghead_backward(head, cache, upstream);

  SplitMix64 pick(77);
  double hstep = 1e-3;
  for (int trial = 0; trial < 50; ++trial) {
    size_t idx = pick.next_index(params.size());
    std::vector<double> plus = params, minus = params;
    plus[idx] += hstep;
    minus[idx] -= hstep;
    double fd = (loss_at(plus) - loss_at(minus)) / (2 * hstep);
    CHECK(std::fabs(fd - grad[idx]) <= 1e-4 * std::max(1.0, std::fabs(grad[idx])));
  }
}

}  // namespace

TEST_CASE("analytic gradients agree with finite differences (distill branch)") {
  check_gradients(false);
}

TEST_CASE("analytic gradients agree with finite differences (warp branch)") {
  check_gradients(true);
}

TEST_CASE("warp branch with zero flow equals the plain branch on the same target") {
  SegHead head = seghead_init(5);
  Frame f = random_frame(12, 12, 31);
  BinaryMask target(12, 12);
  for (int y = 4; y < 8; ++y)
    for (int x = 4; x < 8; ++x) target.at(y, x) = 1;
  FlowField zero(12, 12);

  ForwardCache c1, c2;
  SoftMask p1 = seghead_forward(head, f, &c1);
  SoftMask p2 = seghead_forward(head, f, &c2);

  SoftMask up_plain = l1_loss_grad(p1, target);
  SoftMask up_warp = warp_mask_grad(l1_loss_grad(warp_mask(p2, zero), target), zero);
  auto g1 = seghead_backward(head, c1, up_plain);
  auto g2 = seghead_backward(head, c2, up_warp);
  for (size_t i = 0; i < g1.size(); ++i)
    CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-12));
}

TEST_CASE("adam analytic single steps") {
  SUBCASE("first step moves by about lr") {
    AdamState st(1);
    std::vector<double> p{1.0};
    std::vector<double> g{1.0};
    adam_step(st, p, g);
    CHECK(p[0] == doctest::Approx(1.0 - 1e-4 / (1.0 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("zero gradient with zero state leaves parameters put") {
    AdamState st(2);
    std::vector<double> p{0.3, -0.7};
    adam_step(st, p, std::vector<double>{0.0, 0.0});
    CHECK(p == std::vector<double>{0.3, -0.7});
  }
  SUBCASE("constant gradient keeps steps near lr") {
    AdamState st(1);
    std::vector<double> p{0.0};
    std::vector<double> g{0.5};
    adam_step(st, p, g);
    double first = -p[0];
    double before = p[0];
    adam_step(st, p, g);
    double second = before - p[0];
    CHECK(first == doctest::Approx(1e-4).epsilon(1e-4));
    CHECK(second == doctest::Approx(1e-4).epsilon(1e-4));
  }
}

TEST_CASE("sample_neighbor honors the boundary rules") {
  std::vector<int> offsets{-2, -1, 1, 2};
  SplitMix64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    int j = sample_neighbor(0, 10, offsets, rng);
    CHECK((j == 1 || j == 2));
    j = sample_neighbor(9, 10, offsets, rng);
    CHECK((j == 7 || j == 8));
  }
  SUBCASE("interior draws are uniform") {
    SplitMix64 r2(8);
    int counts[4] = {0, 0, 0, 0};
    int n = 10000;
    for (int i = 0; i < n; ++i) {
      int j = sample_neighbor(5, 11, offsets, r2);
      if (j == 3) ++counts[0];
      if (j == 4) ++counts[1];
      if (j == 6) ++counts[2];
      if (j == 7) ++counts[3];
    }
    for (int k = 0; k < 4; ++k)
      CHECK(std::fabs(counts[k] / static_cast<double>(n) - 0.25) <= 0.02);
  }
}

namespace {

SynthSpec train_spec() {
  SynthSpec s;
  s.height = 32;
  s.width = 48;
  s.n_frames = 5;
  s.object_size = 12;
  s.vel_x = 1;
  s.vel_y = 1;
  s.origin = {{8.0, 8.0}};
  s.fg_texture.color = {0.9, 0.1, 0.1};
  s.bg_texture.color = {0.1, 0.1, 0.9};
  s.seed = 12;
  return s;
}

}  // namespace

TEST_CASE("distillation-only training reduces the loss over early epochs") {
  VideoSequence seq = generate(train_spec());
  TrainConfig cfg;
  cfg.n_epochs = 10;
  cfg.seed = 3;
  cfg.warp_branch_prob = 0.0;  // all steps take the pseudo-mask branch
  HSFlowProvider flows(seq, {});
  TrainStats stats;
  train(seq, seq.gt_masks, flows, cfg, &stats);
  REQUIRE(stats.epoch_mean_loss.size() == 10);
  CHECK(stats.warp_steps == 0);
  for (size_t e = 1; e < stats.epoch_mean_loss.size(); ++e)
    CHECK(stats.epoch_mean_loss[e] < stats.epoch_mean_loss[e - 1]);
}

TEST_CASE("training on perfect pseudo masks reaches high accuracy") {
  SynthSpec s = train_spec();
  s.height = 48;
  s.width = 96;
  s.object_size = 32;
  s.origin = {{16.0, 8.0}};
  VideoSequence seq = generate(s);
  TrainConfig cfg;
  cfg.n_epochs = 50;
  cfg.seed = 7;
  HSFlowProvider flows(seq, {});
  SegHead head = train(seq, seq.gt_masks, flows, cfg);

  double iou_sum = 0;
  for (size_t t = 0; t < seq.frames.size(); ++t) {
    BinaryMask pred = infer(head, seq.frames[t]);
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.values.size(); ++i) {
      bool p = pred.values[i], g = seq.gt_masks[t].values[i];
      inter += p && g;
      uni += p || g;
    }
    iou_sum += static_cast<double>(inter) / uni;
  }
  CHECK(iou_sum / seq.frames.size() >= 0.9);
}

TEST_CASE("training is bitwise deterministic") {
  VideoSequence seq = generate(train_spec());
  TrainConfig cfg;
  cfg.n_epochs = 3;
  cfg.seed = 19;
  HSFlowProvider f1(seq, {}), f2(seq, {});
  SegHead a = train(seq, seq.gt_masks, f1, cfg);
  SegHead b = train(seq, seq.gt_masks, f2, cfg);
  CHECK(a.to_vector() == b.to_vector());
}

TEST_CASE("branch statistics approach the configured split") {
  VideoSequence seq = generate(train_spec());
  TrainConfig cfg;
  cfg.n_epochs = 400;  // 2000 steps on 5 frames
  cfg.seed = 23;
  HSFlowProvider flows(seq, {});
  TrainStats stats;
  train(seq, seq.gt_masks, flows, cfg, &stats);
  double freq = static_cast<double>(stats.warp_steps) / stats.steps;
  CHECK(std::fabs(freq - 0.5) < 0.03);
}

TEST_CASE("infer") {
  SUBCASE("zero head predicts everything foreground under the >= rule") {
    SegHead head;
    BinaryMask m = infer(head, random_frame(8, 8, 1));
    CHECK(m.foreground_count() == 64);
  }
  SUBCASE("inference is deterministic and frame-local") {
    SegHead head = seghead_init(9);
    Frame f = random_frame(16, 16, 2);
    BinaryMask a = infer(head, f);
    BinaryMask b = infer(head, f);
    CHECK(a.values == b.values);
  }
}

TEST_CASE("checkpoint round trip") {
  fs::path dir = fs::temp_directory_path() / "flowcut_segh";
  fs::remove_all(dir);
  fs::create_directories(dir);

  // Float-valued parameters so the float32 file preserves them exactly.
  SegHead head = seghead_init(33);
  std::vector<double> params = head.to_vector();
  for (double& v : params) v = static_cast<float>(v);
  head.from_vector(params);

  save_checkpoint(head, dir / "a.segh");
  SegHead loaded = load_checkpoint(dir / "a.segh");
  CHECK(loaded.to_vector() == head.to_vector());

  save_checkpoint(loaded, dir / "b.segh");
  std::ifstream fa(dir / "a.segh", std::ios::binary), fb(dir / "b.segh", std::ios::binary);
  std::vector<char> ba{std::istreambuf_iterator<char>(fa), {}};
  std::vector<char> bb{std::istreambuf_iterator<char>(fb), {}};
  CHECK(ba == bb);

  SUBCASE("corrupt magic is rejected") {
    std::ofstream bad(dir / "bad.segh", std::ios::binary);
    bad << "XXXX";
    bad.close();
    CHECK_THROWS(load_checkpoint(dir / "bad.segh"));
  }
}
