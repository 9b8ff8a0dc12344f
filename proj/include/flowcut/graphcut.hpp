#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "flowcut/features.hpp"
#include "flowcut/flow.hpp"
#include "flowcut/image.hpp"

namespace flowcut {

enum class EigenMode { kNcut, kRawW };

struct GraphCutConfig {
  double alpha = 0.7;    // appearance/flow blend
  double tau = 0.25;     // edge threshold
  double epsilon = 1e-5; // floor weight keeping the graph connected
  int patch_size = 8;
  EigenMode eigen_mode = EigenMode::kNcut;
  double eigen_tol = 1e-8;
  int eigen_max_iters = 400;

  void validate() const;
};

// Dense symmetric patch-similarity matrix.
struct AdjacencyMatrix {
  int n = 0;
  std::vector<double> w;

  AdjacencyMatrix() = default;
  explicit AdjacencyMatrix(int n_) : n(n_), w(static_cast<size_t>(n_) * n_, 0.0) {}
  double& at(int i, int j) { return w[static_cast<size_t>(i) * n + j]; }
  double at(int i, int j) const { return w[static_cast<size_t>(i) * n + j]; }
};

struct CutResult {
  std::vector<double> eigvec;  // unit Euclidean norm
  double eigval = 0.0;
  std::vector<uint8_t> labels;      // partition A = entries >= mean
  bool fg_is_a = true;
  std::vector<uint8_t> patch_mask;  // rows x cols foreground flags
  int rows = 0, cols = 0;
};

// x.y / (|x||y|); 0 when either norm is below 1e-12.
double cosine_sim(std::span<const double> x, std::span<const double> y);

double combine_similarity(double s_img, double s_flow, double alpha);

// Blended similarity over both grids. Each grid is centered by its
// per-dimension mean over all patches before the cosine, which spreads
// similarities over [-1,1]; diagonal entries are 1 by definition.
AdjacencyMatrix build_adjacency(const FeatureGrid& feat_img,
                                const FeatureGrid& feat_flow, double alpha);

// Entrywise: w >= tau -> 1, else epsilon. Requires 0 < epsilon < tau.
AdjacencyMatrix threshold_adjacency(const AdjacencyMatrix& w, double tau,
                                    double epsilon);

// Second-smallest eigenpair. kNcut solves (D-W) y = lambda D y through the
// symmetric form D^{-1/2}(D-W)D^{-1/2} with the known trivial eigenpair
// deflated; kRawW takes W itself. Dense solver up to n = 512, Lanczos above.
std::pair<std::vector<double>, double> second_smallest_eigenvector(
    const AdjacencyMatrix& w, EigenMode mode, double tol, int max_iters);

// label[i] = eigvec[i] >= mean(eigvec).
std::vector<uint8_t> bipartition(std::span<const double> eigvec);

// Foreground = the partition with the smaller fraction of its patches on the
// grid border; ties prefer the smaller partition, then partition A.
bool select_foreground(std::span<const uint8_t> labels, const PatchGrid& grid);

// Adjacency through upsampling on already-computed feature grids. This is
// the entry point for externally supplied embeddings (FGRD files).
std::pair<BinaryMask, CutResult> graphcut_from_features(
    const FeatureGrid& feat_img, const FeatureGrid& feat_flow,
    const PatchGrid& grid, int height, int width, const GraphCutConfig& cfg);

// Full per-frame cut: flow rendering, featurization, adjacency, threshold,
// eigenvector, bipartition, foreground selection, pixel upsampling.
std::pair<BinaryMask, CutResult> graphcut_frame(const Frame& frame,
                                                const FlowField& flow,
                                                const GraphCutConfig& cfg);

}  // namespace flowcut
