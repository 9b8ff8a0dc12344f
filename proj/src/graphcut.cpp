#include "flowcut/graphcut.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "flowcut/spectral.hpp"

namespace flowcut {

namespace {

constexpr int kDenseLimit = 512;
constexpr double kNormFloor = 1e-12;

std::vector<double> centered(const FeatureGrid& g) {
  int n = g.count(), d = g.dim;
  std::vector<double> mean(d, 0.0);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < d; ++j) mean[j] += g.data[static_cast<size_t>(k) * d + j];
  for (double& m : mean) m /= n;
  std::vector<double> out(g.data.size());
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < d; ++j)
      out[static_cast<size_t>(k) * d + j] = g.data[static_cast<size_t>(k) * d + j] - mean[j];
  return out;
}

}  // namespace

void GraphCutConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("alpha must lie in [0,1]");
  if (!(epsilon > 0.0 && epsilon < tau))
    throw std::invalid_argument("epsilon must lie in (0, tau)");
  if (patch_size <= 0) throw std::invalid_argument("patch_size must be positive");
  if (eigen_tol <= 0.0 || eigen_max_iters <= 0)
    throw std::invalid_argument("eigen tolerance and iteration cap must be positive");
}

double cosine_sim(std::span<const double> x, std::span<const double> y) {
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  nx = std::sqrt(nx);
  ny = std::sqrt(ny);
  if (nx < kNormFloor || ny < kNormFloor) return 0.0;
  return dot / (nx * ny);
}

double combine_similarity(double s_img, double s_flow, double alpha) {
  return alpha * s_img + (1.0 - alpha) * s_flow;
}

AdjacencyMatrix build_adjacency(const FeatureGrid& feat_img,
                                const FeatureGrid& feat_flow, double alpha) {
  if (feat_img.rows != feat_flow.rows || feat_img.cols != feat_flow.cols)
    throw std::invalid_argument("build_adjacency: grid dimensions differ");
  int n = feat_img.count();
  int di = feat_img.dim, df = feat_flow.dim;
  std::vector<double> ci = centered(feat_img);
  std::vector<double> cf = centered(feat_flow);

  AdjacencyMatrix w(n);
  for (int i = 0; i < n; ++i) {
    w.at(i, i) = 1.0;  // self-similarity
    std::span<const double> ii{ci.data() + static_cast<size_t>(i) * di, static_cast<size_t>(di)};
    std::span<const double> fi{cf.data() + static_cast<size_t>(i) * df, static_cast<size_t>(df)};
    for (int j = i + 1; j < n; ++j) {
      std::span<const double> ij{ci.data() + static_cast<size_t>(j) * di, static_cast<size_t>(di)};
      std::span<const double> fj{cf.data() + static_cast<size_t>(j) * df, static_cast<size_t>(df)};
      double s = combine_similarity(cosine_sim(ii, ij), cosine_sim(fi, fj), alpha);
      w.at(i, j) = s;
      w.at(j, i) = s;
    }
  }
  return w;
}

AdjacencyMatrix threshold_adjacency(const AdjacencyMatrix& w, double tau,
                                    double epsilon) {
  if (!(epsilon > 0.0 && epsilon < tau))
    throw std::invalid_argument("threshold_adjacency: need 0 < epsilon < tau");
  AdjacencyMatrix out(w.n);
  for (size_t i = 0; i < w.w.size(); ++i)
    out.w[i] = w.w[i] >= tau ? 1.0 : epsilon;
  return out;
}

std::pair<std::vector<double>, double> second_smallest_eigenvector(
    const AdjacencyMatrix& w, EigenMode mode, double tol, int max_iters) {
  int n = w.n;
  if (n < 2)
    throw std::invalid_argument("second_smallest_eigenvector: need n >= 2");

  if (mode == EigenMode::kRawW) {
    if (n <= kDenseLimit) {
      DenseEigen eig = dense_symmetric_eigen(w.w, n);
      std::vector<double> y(eig.vectors.begin() + n, eig.vectors.begin() + 2 * n);
      return {std::move(y), eig.values[1]};
    }
    auto apply = [&](const double* x, double* out) {
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        const double* row = w.w.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) s += row[j] * x[j];
        out[i] = s;
      }
    };
    LanczosResult lr = lanczos_smallest(n, apply, 2, {}, tol, max_iters);
    if (!lr.converged)
      throw std::runtime_error("eigensolver: Lanczos did not converge");
    std::vector<double> y(lr.vectors.begin() + n, lr.vectors.begin() + 2 * n);
    return {std::move(y), lr.values[1]};
  }

  // Ncut mode. D = diag(row sums); L_sym = I - D^{-1/2} W D^{-1/2}.
  std::vector<double> deg(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += w.at(i, j);
    if (s <= 0.0)
      throw std::runtime_error("zero-degree vertex in thresholded graph");
    deg[i] = s;
  }
  std::vector<double> dmh(n);  // D^{-1/2}
  for (int i = 0; i < n; ++i) dmh[i] = 1.0 / std::sqrt(deg[i]);

  std::vector<double> z;  // eigenvector of L_sym for the second-smallest value
  double lambda = 0.0;

  if (n <= kDenseLimit) {
    std::vector<double> lsym(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        lsym[static_cast<size_t>(i) * n + j] =
            (i == j ? 1.0 : 0.0) - dmh[i] * w.at(i, j) * dmh[j];
    DenseEigen eig = dense_symmetric_eigen(std::move(lsym), n);
    z.assign(eig.vectors.begin() + n, eig.vectors.begin() + 2 * n);
    lambda = eig.values[1];
  } else {
    // Known smallest eigenpair: lambda = 0, z0 proportional to D^{1/2} 1.
    std::vector<double> z0(n);
    double nz = 0.0;
    for (int i = 0; i < n; ++i) {
      z0[i] = std::sqrt(deg[i]);
      nz += z0[i] * z0[i];
    }
    nz = std::sqrt(nz);
    for (double& v : z0) v /= nz;

    auto apply = [&](const double* x, double* out) {
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        const double* row = w.w.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) s += row[j] * (dmh[j] * x[j]);
        out[i] = x[i] - dmh[i] * s;
      }
    };
    LanczosResult lr = lanczos_smallest(n, apply, 1, {z0}, tol, max_iters);
    if (!lr.converged)
      throw std::runtime_error("eigensolver: Lanczos did not converge");
    z.assign(lr.vectors.begin(), lr.vectors.begin() + n);
    lambda = lr.values[0];
  }

  // Map back: y = D^{-1/2} z, unit normalized.
  std::vector<double> y(n);
  double ny = 0.0;
  for (int i = 0; i < n; ++i) {
    y[i] = dmh[i] * z[i];
    ny += y[i] * y[i];
  }
  ny = std::sqrt(ny);
  for (double& v : y) v /= ny;
  return {std::move(y), lambda};
}

std::vector<uint8_t> bipartition(std::span<const double> eigvec) {
  double mean = 0.0;
  for (double v : eigvec) mean += v;
  mean /= static_cast<double>(eigvec.size());
  std::vector<uint8_t> labels(eigvec.size());
  for (size_t i = 0; i < eigvec.size(); ++i) labels[i] = eigvec[i] >= mean ? 1 : 0;
  return labels;
}

bool select_foreground(std::span<const uint8_t> labels, const PatchGrid& grid) {
  size_t n_a = 0, n_b = 0, border_a = 0, border_b = 0;
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      bool border = r == 0 || r == grid.rows - 1 || c == 0 || c == grid.cols - 1;
      if (labels[static_cast<size_t>(r) * grid.cols + c]) {
        ++n_a;
        border_a += border;
      } else {
        ++n_b;
        border_b += border;
      }
    }
  }
  if (n_a == 0) return false;
  if (n_b == 0) return true;
  double fa = static_cast<double>(border_a) / n_a;
  double fb = static_cast<double>(border_b) / n_b;
  if (fa != fb) return fa < fb;
  if (n_a != n_b) return n_a < n_b;
  return true;
}

std::pair<BinaryMask, CutResult> graphcut_from_features(
    const FeatureGrid& feat_img, const FeatureGrid& feat_flow,
    const PatchGrid& grid, int height, int width, const GraphCutConfig& cfg) {
  cfg.validate();
  if (feat_img.rows != grid.rows || feat_img.cols != grid.cols)
    throw std::invalid_argument("graphcut_from_features: grid mismatch");

  AdjacencyMatrix w = threshold_adjacency(
      build_adjacency(feat_img, feat_flow, cfg.alpha), cfg.tau, cfg.epsilon);

  CutResult cut;
  cut.rows = grid.rows;
  cut.cols = grid.cols;
  std::tie(cut.eigvec, cut.eigval) = second_smallest_eigenvector(
      w, cfg.eigen_mode, cfg.eigen_tol, cfg.eigen_max_iters);
  cut.labels = bipartition(cut.eigvec);

  size_t n_a = std::accumulate(cut.labels.begin(), cut.labels.end(), size_t{0});
  bool degenerate = n_a == 0 || n_a == cut.labels.size();
  cut.fg_is_a = degenerate ? true : select_foreground(cut.labels, grid);

  cut.patch_mask.resize(cut.labels.size());
  for (size_t i = 0; i < cut.labels.size(); ++i)
    cut.patch_mask[i] =
        degenerate ? 0 : (cut.labels[i] == (cut.fg_is_a ? 1 : 0) ? 1 : 0);

  BinaryMask mask = upsample_patch_mask(cut.patch_mask, grid, height, width);
  return {std::move(mask), std::move(cut)};
}

std::pair<BinaryMask, CutResult> graphcut_frame(const Frame& frame,
                                                const FlowField& flow,
                                                const GraphCutConfig& cfg) {
  cfg.validate();
  if (flow.height != frame.height || flow.width != frame.width)
    throw std::invalid_argument("graphcut_frame: flow dimensions differ");

  PatchGrid grid = PatchGrid::for_frame(frame.height, frame.width, cfg.patch_size);
  Frame flow_rgb = flow_to_rgb(flow);
  FeatureGrid feat_img = featurize(frame, cfg.patch_size);
  FeatureGrid feat_flow = featurize(flow_rgb, cfg.patch_size);
  return graphcut_from_features(feat_img, feat_flow, grid, frame.height,
                                frame.width, cfg);
}

}  // namespace flowcut
