#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "flowcut/flow.hpp"
#include "flowcut/image.hpp"
#include "flowcut/rng.hpp"

namespace flowcut {

// Fixed 3-layer convolutional head. Input is H x W x 5 (RGB plus normalized
// x/W and y/H coordinate channels); conv1 5->16 ReLU, conv2 16->16 ReLU,
// conv3 16->1 sigmoid. All kernels 3x3, stride 1, reflect padding 1.
struct SegHead {
  static constexpr int kIn = 5;
  static constexpr int kHidden = 16;
  static constexpr int kKernel = 3;

  // Kernel layout: [out][in][ky][kx], biases per output channel.
  std::vector<double> w1, b1, w2, b2, w3, b3;

  SegHead();
  size_t parameter_count() const;  // 3201

  // Flat parameter vector in the fixed order w1,b1,w2,b2,w3,b3.
  std::vector<double> to_vector() const;
  void from_vector(std::span<const double> params);
};

// Kernels uniform in (-s, s) with s = sqrt(1/(9 c_in)), biases zero.
SegHead seghead_init(uint64_t seed);

// Activations retained for the backward pass.
struct ForwardCache {
  int height = 0, width = 0;
  std::vector<double> input;  // 5 channels
  std::vector<double> a1, a2; // post-ReLU activations
  std::vector<double> out;    // post-sigmoid
};

SoftMask seghead_forward(const SegHead& head, const Frame& frame,
                         ForwardCache* cache = nullptr);

// Exact gradients of a scalar loss with upstream dL/d(output). Returns the
// gradient in to_vector() order.
std::vector<double> seghead_backward(const SegHead& head,
                                     const ForwardCache& cache,
                                     const SoftMask& upstream);

double l1_loss(const SoftMask& pred, const SoftMask& target);
double l1_loss(const SoftMask& pred, const BinaryMask& target);

// d(mean |pred - target|)/d pred = sign(pred - target) / N.
SoftMask l1_loss_grad(const SoftMask& pred, const SoftMask& target);
SoftMask l1_loss_grad(const SoftMask& pred, const BinaryMask& target);

struct AdamState {
  std::vector<double> m, v;
  int64_t t = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;

  explicit AdamState(size_t n_params) : m(n_params, 0.0), v(n_params, 0.0) {}
};

void adam_step(AdamState& state, std::vector<double>& params,
               std::span<const double> grads);

struct TrainConfig {
  int n_epochs = 200;
  uint64_t seed = 0;
  std::vector<int> neighbor_offsets{-2, -1, 1, 2};
  double warp_branch_prob = 0.5;

  void validate() const;
};

// Uniform draw from the offsets that keep idx+offset inside [0, len).
int sample_neighbor(int idx, int len, std::span<const int> offsets,
                    SplitMix64& rng);

// Supplies the backward flow (computed from frame `from_idx` to frame
// `to_idx`) needed to warp a mask out of `to_idx`'s coordinates.
class FlowProvider {
 public:
  virtual ~FlowProvider() = default;
  virtual const FlowField& backward_flow(int from_idx, int to_idx) = 0;
};

// Computes flows on demand with Horn-Schunck and caches them.
class HSFlowProvider : public FlowProvider {
 public:
  HSFlowProvider(const VideoSequence& seq, const HSConfig& cfg)
      : seq_(seq), cfg_(cfg) {}
  const FlowField& backward_flow(int from_idx, int to_idx) override;

 private:
  const VideoSequence& seq_;
  HSConfig cfg_;
  std::vector<std::pair<uint64_t, FlowField>> cache_;
};

struct TrainStats {
  int64_t steps = 0;
  int64_t warp_steps = 0;  // temporal-consistency branch count
  std::vector<double> epoch_mean_loss;
};

// Per-frame loss schedule: p < 1 - warp_branch_prob distills against the
// frame's own pseudo mask, otherwise the prediction is warped to a sampled
// neighbor and compared against that neighbor's pseudo mask. One Adam step
// per frame, all frames each epoch, fully deterministic under cfg.seed.
SegHead train(const VideoSequence& seq, const std::vector<BinaryMask>& pseudo,
              FlowProvider& flows, const TrainConfig& cfg,
              TrainStats* stats = nullptr);

// binarize(forward(head, frame), 0.5); depends on this frame alone.
BinaryMask infer(const SegHead& head, const Frame& frame);

// Checkpoint: magic "SEGH", version 1, layer shapes, float32 parameters.
void save_checkpoint(const SegHead& head, const std::filesystem::path& path);
SegHead load_checkpoint(const std::filesystem::path& path);

}  // namespace flowcut
