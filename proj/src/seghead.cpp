#include "flowcut/seghead.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace flowcut {

namespace {

constexpr int K = SegHead::kKernel;

inline int mirror(int p, int n) {
  if (p < 0) return n > 1 ? -p : 0;
  if (p >= n) return n > 1 ? 2 * n - 2 - p : 0;
  return p;
}

// out[o] = b[o] + sum_i w[o][i] * in[i], 3x3, reflect padding 1.
void conv3x3(const std::vector<double>& in, int in_ch, int h, int w,
             const std::vector<double>& weights, const std::vector<double>& bias,
             int out_ch, std::vector<double>& out) {
  size_t plane = static_cast<size_t>(h) * w;
  out.assign(plane * out_ch, 0.0);
  for (int o = 0; o < out_ch; ++o) {
    double* op = out.data() + plane * o;
    for (size_t p = 0; p < plane; ++p) op[p] = bias[o];
    for (int i = 0; i < in_ch; ++i) {
      const double* ip = in.data() + plane * i;
      const double* wk = weights.data() +
                         (static_cast<size_t>(o) * in_ch + i) * K * K;
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          double wv = wk[ky * K + kx];
          int dy = ky - 1, dx = kx - 1;
          for (int y = 0; y < h; ++y) {
            const double* row = ip + static_cast<size_t>(mirror(y + dy, h)) * w;
            double* orow = op + static_cast<size_t>(y) * w;
            for (int x = 0; x < w; ++x)
              orow[x] += wv * row[mirror(x + dx, w)];
          }
        }
      }
    }
  }
}

// Accumulates kernel/bias/input gradients for one conv layer.
void conv3x3_backward(const std::vector<double>& in, int in_ch, int h, int w,
                      const std::vector<double>& weights, int out_ch,
                      const std::vector<double>& upstream,
                      std::vector<double>& grad_w, std::vector<double>& grad_b,
                      std::vector<double>* grad_in) {
  size_t plane = static_cast<size_t>(h) * w;
  grad_w.assign(static_cast<size_t>(out_ch) * in_ch * K * K, 0.0);
  grad_b.assign(out_ch, 0.0);
  if (grad_in) grad_in->assign(plane * in_ch, 0.0);

  for (int o = 0; o < out_ch; ++o) {
    const double* up = upstream.data() + plane * o;
    for (size_t p = 0; p < plane; ++p) grad_b[o] += up[p];
    for (int i = 0; i < in_ch; ++i) {
      const double* ip = in.data() + plane * i;
      double* gip = grad_in ? grad_in->data() + plane * i : nullptr;
      const double* wk = weights.data() +
                         (static_cast<size_t>(o) * in_ch + i) * K * K;
      double* gwk = grad_w.data() + (static_cast<size_t>(o) * in_ch + i) * K * K;
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          int dy = ky - 1, dx = kx - 1;
          double wv = wk[ky * K + kx];
          double gw = 0.0;
          for (int y = 0; y < h; ++y) {
            int ry = mirror(y + dy, h);
            const double* irow = ip + static_cast<size_t>(ry) * w;
            const double* urow = up + static_cast<size_t>(y) * w;
            if (gip) {
              double* girow = gip + static_cast<size_t>(ry) * w;
              for (int x = 0; x < w; ++x) {
                int rx = mirror(x + dx, w);
                gw += urow[x] * irow[rx];
                girow[rx] += urow[x] * wv;
              }
            } else {
              for (int x = 0; x < w; ++x) gw += urow[x] * irow[mirror(x + dx, w)];
            }
          }
          gwk[ky * K + kx] += gw;
        }
      }
    }
  }
}

std::vector<double> build_input(const Frame& frame) {
  int h = frame.height, w = frame.width;
  size_t plane = static_cast<size_t>(h) * w;
  std::vector<double> input(plane * SegHead::kIn);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      size_t p = static_cast<size_t>(y) * w + x;
      for (int c = 0; c < 3; ++c) input[plane * c + p] = frame.at(y, x, c);
      input[plane * 3 + p] = static_cast<double>(x) / w;
      input[plane * 4 + p] = static_cast<double>(y) / h;
    }
  }
  return input;
}

}  // namespace

SegHead::SegHead()
    : w1(static_cast<size_t>(kHidden) * kIn * K * K, 0.0),
      b1(kHidden, 0.0),
      w2(static_cast<size_t>(kHidden) * kHidden * K * K, 0.0),
      b2(kHidden, 0.0),
      w3(static_cast<size_t>(1) * kHidden * K * K, 0.0),
      b3(1, 0.0) {}

size_t SegHead::parameter_count() const {
  return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
}

std::vector<double> SegHead::to_vector() const {
  std::vector<double> v;
  v.reserve(parameter_count());
  for (const auto* part : {&w1, &b1, &w2, &b2, &w3, &b3})
    v.insert(v.end(), part->begin(), part->end());
  return v;
}

void SegHead::from_vector(std::span<const double> params) {
  if (params.size() != parameter_count())
    throw std::invalid_argument("SegHead::from_vector: wrong parameter count");
  size_t off = 0;
  for (auto* part : {&w1, &b1, &w2, &b2, &w3, &b3}) {
    std::copy(params.begin() + off, params.begin() + off + part->size(), part->begin());
    off += part->size();
  }
}

SegHead seghead_init(uint64_t seed) {
  SegHead head;
  SplitMix64 rng(seed);
  auto fill = [&](std::vector<double>& w, int c_in) {
    double s = std::sqrt(1.0 / (9.0 * c_in));
    for (double& v : w) v = rng.next_symmetric(s);
  };
  fill(head.w1, SegHead::kIn);
  fill(head.w2, SegHead::kHidden);
  fill(head.w3, SegHead::kHidden);
  return head;
}

SoftMask seghead_forward(const SegHead& head, const Frame& frame,
                         ForwardCache* cache) {
  int h = frame.height, w = frame.width;
  size_t plane = static_cast<size_t>(h) * w;

  std::vector<double> input = build_input(frame);
  std::vector<double> z1, z2, z3;
  conv3x3(input, SegHead::kIn, h, w, head.w1, head.b1, SegHead::kHidden, z1);
  for (double& v : z1) v = v > 0.0 ? v : 0.0;
  conv3x3(z1, SegHead::kHidden, h, w, head.w2, head.b2, SegHead::kHidden, z2);
  for (double& v : z2) v = v > 0.0 ? v : 0.0;
  conv3x3(z2, SegHead::kHidden, h, w, head.w3, head.b3, 1, z3);

  SoftMask out(h, w);
  for (size_t p = 0; p < plane; ++p) out.values[p] = 1.0 / (1.0 + std::exp(-z3[p]));

  if (cache) {
    cache->height = h;
    cache->width = w;
    cache->input = std::move(input);
    cache->a1 = std::move(z1);
    cache->a2 = std::move(z2);
    cache->out = out.values;
  }
  return out;
}

std::vector<double> seghead_backward(const SegHead& head,
                                     const ForwardCache& cache,
                                     const SoftMask& upstream) {
  int h = cache.height, w = cache.width;
  if (upstream.height != h || upstream.width != w)
    throw std::invalid_argument("seghead_backward: upstream dimensions differ");
  size_t plane = static_cast<size_t>(h) * w;

  // Through the sigmoid.
  std::vector<double> dz3(plane);
  for (size_t p = 0; p < plane; ++p) {
    double s = cache.out[p];
    dz3[p] = upstream.values[p] * s * (1.0 - s);
  }

  std::vector<double> gw3, gb3, da2;
  conv3x3_backward(cache.a2, SegHead::kHidden, h, w, head.w3, 1, dz3, gw3, gb3, &da2);
  for (size_t p = 0; p < da2.size(); ++p)
    if (cache.a2[p] <= 0.0) da2[p] = 0.0;

  std::vector<double> gw2, gb2, da1;
  conv3x3_backward(cache.a1, SegHead::kHidden, h, w, head.w2, SegHead::kHidden,
                   da2, gw2, gb2, &da1);
  for (size_t p = 0; p < da1.size(); ++p)
    if (cache.a1[p] <= 0.0) da1[p] = 0.0;

  std::vector<double> gw1, gb1;
  conv3x3_backward(cache.input, SegHead::kIn, h, w, head.w1, SegHead::kHidden,
                   da1, gw1, gb1, nullptr);

  std::vector<double> grad;
  grad.reserve(head.parameter_count());
  for (const auto* part : {&gw1, &gb1, &gw2, &gb2, &gw3, &gb3})
    grad.insert(grad.end(), part->begin(), part->end());
  return grad;
}

namespace {

template <typename T>
double l1_impl(const SoftMask& pred, const T& target) {
  if (pred.height != target.height || pred.width != target.width)
    throw std::invalid_argument("l1_loss: dimensions differ");
  double sum = 0.0;
  for (size_t i = 0; i < pred.values.size(); ++i)
    sum += std::fabs(pred.values[i] - static_cast<double>(target.values[i]));
  return sum / static_cast<double>(pred.values.size());
}

template <typename T>
SoftMask l1_grad_impl(const SoftMask& pred, const T& target) {
  if (pred.height != target.height || pred.width != target.width)
    throw std::invalid_argument("l1_loss_grad: dimensions differ");
  SoftMask g(pred.height, pred.width);
  double inv_n = 1.0 / static_cast<double>(pred.values.size());
  for (size_t i = 0; i < pred.values.size(); ++i) {
    double diff = pred.values[i] - static_cast<double>(target.values[i]);
    g.values[i] = diff > 0.0 ? inv_n : (diff < 0.0 ? -inv_n : 0.0);
  }
  return g;
}

}  // namespace

double l1_loss(const SoftMask& pred, const SoftMask& target) { return l1_impl(pred, target); }
double l1_loss(const SoftMask& pred, const BinaryMask& target) { return l1_impl(pred, target); }
SoftMask l1_loss_grad(const SoftMask& pred, const SoftMask& target) { return l1_grad_impl(pred, target); }
SoftMask l1_loss_grad(const SoftMask& pred, const BinaryMask& target) { return l1_grad_impl(pred, target); }

void adam_step(AdamState& state, std::vector<double>& params,
               std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps_hat);
  }
}

void TrainConfig::validate() const {
  if (n_epochs <= 0) throw std::invalid_argument("n_epochs must be positive");
  if (neighbor_offsets.empty())
    throw std::invalid_argument("neighbor_offsets must be nonempty");
  if (warp_branch_prob < 0.0 || warp_branch_prob > 1.0)
    throw std::invalid_argument("warp_branch_prob must lie in [0,1]");
}

int sample_neighbor(int idx, int len, std::span<const int> offsets,
                    SplitMix64& rng) {
  int valid[8];
  int n_valid = 0;
  for (int off : offsets) {
    int j = idx + off;
    if (j >= 0 && j < len && n_valid < 8) valid[n_valid++] = j;
  }
  if (n_valid == 0)
    throw std::runtime_error("sample_neighbor: no valid neighbor offsets");
  return valid[rng.next_index(static_cast<uint64_t>(n_valid))];
}

const FlowField& HSFlowProvider::backward_flow(int from_idx, int to_idx) {
  uint64_t key = (static_cast<uint64_t>(static_cast<uint32_t>(from_idx)) << 32) |
                 static_cast<uint32_t>(to_idx);
  for (const auto& [k, f] : cache_)
    if (k == key) return f;
  cache_.emplace_back(key, horn_schunck(seq_.frames[from_idx], seq_.frames[to_idx], cfg_));
  return cache_.back().second;
}

SegHead train(const VideoSequence& seq, const std::vector<BinaryMask>& pseudo,
              FlowProvider& flows, const TrainConfig& cfg, TrainStats* stats) {
  cfg.validate();
  int len = static_cast<int>(seq.frames.size());
  if (pseudo.size() != seq.frames.size())
    throw std::invalid_argument("train: pseudo mask count differs from frame count");
  if (len < 5) throw std::invalid_argument("train: need at least 5 frames");

  SegHead head = seghead_init(derive_seed(cfg.seed, "seghead-init"));
  std::vector<double> params = head.to_vector();
  AdamState adam(params.size());
  SplitMix64 rng(derive_seed(cfg.seed, "loss-schedule"));

  for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    double loss_sum = 0.0;
    for (int f1 = 0; f1 < len; ++f1) {
      double p = rng.next_double();
      ForwardCache cache;
      SoftMask pred = seghead_forward(head, seq.frames[f1], &cache);

      double loss;
      SoftMask upstream;
      if (p < 1.0 - cfg.warp_branch_prob) {
        loss = l1_loss(pred, pseudo[f1]);
        upstream = l1_loss_grad(pred, pseudo[f1]);
      } else {
        int f2 = sample_neighbor(f1, len, cfg.neighbor_offsets, rng);
        const FlowField& flow = flows.backward_flow(f2, f1);
        SoftMask warped = warp_mask(pred, flow);
        loss = l1_loss(warped, pseudo[f2]);
        upstream = warp_mask_grad(l1_loss_grad(warped, pseudo[f2]), flow);
        if (stats) stats->warp_steps += 1;
      }
      loss_sum += loss;
      if (stats) stats->steps += 1;

      std::vector<double> grads = seghead_backward(head, cache, upstream);
      adam_step(adam, params, grads);
      head.from_vector(params);
    }
    if (stats) stats->epoch_mean_loss.push_back(loss_sum / len);
  }
  return head;
}

BinaryMask infer(const SegHead& head, const Frame& frame) {
  return binarize(seghead_forward(head, frame), 0.5);
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
  if (in.gcount() != 4) throw std::runtime_error("truncated checkpoint: " + path.string());
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

constexpr uint32_t kLayerShapes[3][4] = {
    {SegHead::kHidden, SegHead::kIn, 3, 3},
    {SegHead::kHidden, SegHead::kHidden, 3, 3},
    {1, SegHead::kHidden, 3, 3},
};

}  // namespace

void save_checkpoint(const SegHead& head, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write("SEGH", 4);
  put_u32(out, 1);  // format version
  put_u32(out, 3);  // layer count
  for (const auto& shape : kLayerShapes)
    for (uint32_t v : shape) put_u32(out, v);
  for (double v : head.to_vector()) {
    float f = static_cast<float>(v);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

SegHead load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "SEGH", 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path.string());
  if (get_u32(in, path) != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path.string());
  if (get_u32(in, path) != 3)
    throw std::runtime_error("unexpected layer count in " + path.string());
  for (const auto& shape : kLayerShapes)
    for (uint32_t want : shape)
      if (get_u32(in, path) != want)
        throw std::runtime_error("unexpected layer shape in " + path.string());

  SegHead head;
  std::vector<double> params(head.parameter_count());
  for (double& v : params) {
    uint32_t bits = get_u32(in, path);
    float f;
    std::memcpy(&f, &bits, 4);
    v = f;
  }
  char extra;
  if (in.read(&extra, 1); in.gcount() != 0)
    throw std::runtime_error("trailing bytes in checkpoint: " + path.string());
  head.from_vector(params);
  return head;
}

}  // namespace flowcut
