#include "flowcut/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace flowcut {

namespace {

// Householder reduction of a (row-major, symmetric) to tridiagonal form with
// accumulated transformations. After the call a holds the orthogonal matrix Q
// (a[i*n+j] = Q_ij), d the diagonal and e the subdiagonal (e[0] unused).
void tridiagonalize(std::vector<double>& a, int n, std::vector<double>& d,
                    std::vector<double>& e) {
  auto z = [&](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };

  for (int i = n - 1; i >= 1; --i) {
    int l = i - 1;
    double h = 0.0, scale = 0.0;
    if (l > 0) {
      for (int k = 0; k <= l; ++k) scale += std::fabs(z(i, k));
      if (scale == 0.0) {
        e[i] = z(i, l);
      } else {
        for (int k = 0; k <= l; ++k) {
          z(i, k) /= scale;
          h += z(i, k) * z(i, k);
        }
        double f = z(i, l);
        double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
        e[i] = scale * g;
        h -= f * g;
        z(i, l) = f - g;
        f = 0.0;
        for (int j = 0; j <= l; ++j) {
          z(j, i) = z(i, j) / h;
          g = 0.0;
          for (int k = 0; k <= j; ++k) g += z(j, k) * z(i, k);
          for (int k = j + 1; k <= l; ++k) g += z(k, j) * z(i, k);
          e[j] = g / h;
          f += e[j] * z(i, j);
        }
        double hh = f / (h + h);
        for (int j = 0; j <= l; ++j) {
          f = z(i, j);
          e[j] = g = e[j] - hh * f;
          for (int k = 0; k <= j; ++k) z(j, k) -= f * e[k] + g * z(i, k);
        }
      }
    } else {
      e[i] = z(i, l);
    }
    d[i] = h;
  }
  d[0] = 0.0;
  e[0] = 0.0;
  for (int i = 0; i < n; ++i) {
    if (d[i] != 0.0) {
      for (int j = 0; j < i; ++j) {
        double g = 0.0;
        for (int k = 0; k < i; ++k) g += z(i, k) * z(k, j);
        for (int k = 0; k < i; ++k) z(k, j) -= g * z(k, i);
      }
    }
    d[i] = z(i, i);
    z(i, i) = 1.0;
    for (int j = 0; j < i; ++j) z(j, i) = z(i, j) = 0.0;
  }
}

// Implicit-shift QL on a tridiagonal (d, e) with eigenvector accumulation in
// a. Eigenvalues land in d unordered.
void tridiagonal_ql(std::vector<double>& d, std::vector<double>& e,
                    std::vector<double>& a, int n) {
  auto z = [&](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };
  constexpr int kMaxSweeps = 50;
  constexpr double kEps = std::numeric_limits<double>::epsilon();

  for (int i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  // Norm-scaled absolute floor: rank-deficient inputs drive a zero cluster
  // into the subnormal range where the relative test alone can never fire.
  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    anorm = std::max(anorm, std::fabs(d[i]) + std::fabs(e[i]));
  double floor_tol = kEps * kEps * std::max(anorm, 1e-300);

  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        double dd = std::fabs(d[m]) + std::fabs(d[m + 1]);
        if (std::fabs(e[m]) <= kEps * dd + floor_tol) break;
      }
      if (m != l) {
        if (iter++ == kMaxSweeps)
          throw std::runtime_error("eigensolver: QL failed to converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        int i;
        for (i = m - 1; i >= l; --i) {
          double f = s * e[i];
          double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          for (int k = 0; k < n; ++k) {
            f = z(k, i + 1);
            z(k, i + 1) = s * z(k, i) + c * f;
            z(k, i) = c * z(k, i) - s * f;
          }
        }
        if (r == 0.0 && i >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
}

}  // namespace

DenseEigen dense_symmetric_eigen(std::vector<double> a, int n) {
  if (n <= 0 || a.size() != static_cast<size_t>(n) * n)
    throw std::invalid_argument("dense_symmetric_eigen: bad dimensions");
  std::vector<double> d(n, 0.0), e(n, 0.0);
  if (n == 1) {
    return {{a[0]}, {1.0}};
  }
  tridiagonalize(a, n, d, e);
  tridiagonal_ql(d, e, a, n);

  // Sort ascending; a holds eigenvectors as columns.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return d[i] < d[j]; });

  DenseEigen res;
  res.values.resize(n);
  res.vectors.resize(static_cast<size_t>(n) * n);
  for (int k = 0; k < n; ++k) {
    res.values[k] = d[order[k]];
    for (int i = 0; i < n; ++i)
      res.vectors[static_cast<size_t>(k) * n + i] = a[static_cast<size_t>(i) * n + order[k]];
  }
  return res;
}

LanczosResult lanczos_smallest(
    int n, const std::function<void(const double*, double*)>& apply,
    int n_pairs, const std::vector<std::vector<double>>& deflate, double tol,
    int max_iters) {
  LanczosResult res;
  if (n_pairs <= 0 || n_pairs > n) return res;

  auto dot = [n](const double* x, const double* y) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
  };
  auto project_out = [&](std::vector<double>& x, const std::vector<double>& q) {
    double c = dot(x.data(), q.data());
    for (int i = 0; i < n; ++i) x[i] -= c * q[i];
  };

  int max_dim = std::min(n, std::max(2 * n_pairs + 2, std::min(max_iters, 400)));

  std::vector<std::vector<double>> basis;
  std::vector<double> alpha, beta;

  // Fixed deterministic start vector, deflated.
  std::vector<double> q(n);
  for (int i = 0; i < n; ++i)
    q[i] = 1.0 + 0.5 * std::sin(0.7 * i + 0.3);  // no accidental orthogonality
  for (const auto& dv : deflate) project_out(q, dv);
  double nrm = std::sqrt(dot(q.data(), q.data()));
  if (nrm < 1e-30) throw std::runtime_error("lanczos: start vector vanished");
  for (double& v : q) v /= nrm;
  basis.push_back(q);

  std::vector<double> w(n);
  for (int k = 0; k < max_dim; ++k) {
    res.iterations = k + 1;
    apply(basis[k].data(), w.data());
    double a_k = dot(w.data(), basis[k].data());
    alpha.push_back(a_k);

    for (int i = 0; i < n; ++i) w[i] -= a_k * basis[k][i];
    if (k > 0)
      for (int i = 0; i < n; ++i) w[i] -= beta[k - 1] * basis[k - 1][i];

    // Full reorthogonalization keeps the basis clean despite convergence.
    std::vector<double> wv(w.begin(), w.end());
    for (const auto& dv : deflate) project_out(wv, dv);
    for (const auto& bv : basis) project_out(wv, bv);
    for (const auto& dv : deflate) project_out(wv, dv);

    double b_k = std::sqrt(dot(wv.data(), wv.data()));

    // Ritz pairs of the current tridiagonal section.
    int m = k + 1;
    if (m >= n_pairs) {
      std::vector<double> t(static_cast<size_t>(m) * m, 0.0);
      for (int i = 0; i < m; ++i) {
        t[static_cast<size_t>(i) * m + i] = alpha[i];
        if (i + 1 < m) {
          t[static_cast<size_t>(i) * m + i + 1] = beta[i];
          t[static_cast<size_t>(i + 1) * m + i] = beta[i];
        }
      }
      DenseEigen te = dense_symmetric_eigen(std::move(t), m);
      // Residual of Ritz pair j is |b_k * last component of its T-eigvec|.
      bool all_ok = true;
      for (int j = 0; j < n_pairs; ++j) {
        double resid = std::fabs(b_k * te.vectors[static_cast<size_t>(j) * m + (m - 1)]);
        if (resid > tol) {
          all_ok = false;
          break;
        }
      }
      if (all_ok || b_k < 1e-14 || m == n) {
        res.values.assign(te.values.begin(), te.values.begin() + n_pairs);
        res.vectors.assign(static_cast<size_t>(n_pairs) * n, 0.0);
        for (int j = 0; j < n_pairs; ++j) {
          double* out = res.vectors.data() + static_cast<size_t>(j) * n;
          for (int i = 0; i < m; ++i) {
            double c = te.vectors[static_cast<size_t>(j) * m + i];
            const double* bi = basis[i].data();
            for (int p = 0; p < n; ++p) out[p] += c * bi[p];
          }
          double vn = std::sqrt(dot(out, out));
          if (vn > 0)
            for (int p = 0; p < n; ++p) out[p] /= vn;
        }
        res.converged = all_ok || b_k < 1e-14;
        return res;
      }
    }

    if (b_k < 1e-14) {
      // Invariant subspace hit before convergence criteria; restart direction.
      std::vector<double> fresh(n);
      for (int i = 0; i < n; ++i) fresh[i] = std::cos(1.3 * i + 0.1 * k);
      for (const auto& dv : deflate) project_out(fresh, dv);
      for (const auto& bv : basis) project_out(fresh, bv);
      double fn = std::sqrt(dot(fresh.data(), fresh.data()));
      if (fn < 1e-20) break;
      for (double& v : fresh) v /= fn;
      wv = std::move(fresh);
      b_k = 0.0;  // breaks the three-term recurrence on purpose
    } else {
      for (double& v : wv) v /= b_k;
    }
    beta.push_back(b_k);
    basis.push_back(std::move(wv));
  }
  return res;
}

}  // namespace flowcut
