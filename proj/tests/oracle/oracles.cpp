#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "proma/rng.hpp"

namespace proma::oracle {

DenseVector solve_linear(DenseMatrix a, DenseVector b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw std::invalid_argument("solve_linear: shape mismatch");
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t row = col + 1; row < n; ++row)
      if (std::fabs(a(row, col)) > std::fabs(a(pivot, col))) pivot = row;
    if (a(pivot, col) == 0.0) throw std::runtime_error("solve_linear: singular matrix");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(col, j), a(pivot, j));
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t row = col + 1; row < n; ++row) {
      const double f = a(row, col) / a(col, col);
      if (f == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) a(row, j) -= f * a(col, j);
      b[row] -= f * b[col];
    }
  }
  DenseVector x(n, 0.0);
  for (std::size_t row = n; row-- > 0;) {
    double s = b[row];
    for (std::size_t j = row + 1; j < n; ++j) s -= a(row, j) * x[j];
    x[row] = s / a(row, row);
  }
  return x;
}

DenseVector project_complement_pseudoinverse(const DenseVector& acc, const DenseMatrix& vecs) {
  const std::size_t d = vecs.rows();
  const std::size_t k = vecs.cols();
  DenseMatrix gram(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t row = 0; row < d; ++row) s += vecs(row, i) * vecs(row, j);
      gram(i, j) = s;
    }
  DenseVector vt_acc(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t row = 0; row < d; ++row) s += vecs(row, j) * acc[row];
    vt_acc[j] = s;
  }
  const DenseVector coeff = solve_linear(gram, vt_acc);
  DenseVector out = acc;
  for (std::size_t row = 0; row < d; ++row) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += vecs(row, j) * coeff[j];
    out[row] -= s;
  }
  return out;
}

DenseMatrix gram_schmidt_twice(const DenseMatrix& m) {
  const std::size_t d = m.rows();
  const std::size_t k = m.cols();
  DenseMatrix q(d, k);
  double max_colnorm = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += m(i, j) * m(i, j);
    max_colnorm = std::max(max_colnorm, std::sqrt(s));
  }
  for (std::size_t j = 0; j < k; ++j) {
    DenseVector v = m.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) {
        double h = 0.0;
        for (std::size_t row = 0; row < d; ++row) h += q(row, i) * v[row];
        for (std::size_t row = 0; row < d; ++row) v[row] -= h * q(row, i);
      }
    }
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm <= 1e-12 * max_colnorm) continue;
    for (std::size_t row = 0; row < d; ++row) q(row, j) = v[row] / nrm;
  }
  return q;
}

SvdResult jacobi_svd(const DenseMatrix& a) {
  if (a.rows() < a.cols()) {
    SvdResult t = jacobi_svd(a.transposed());
    return SvdResult{t.v, t.sigma, t.u};
  }
  const std::size_t n = a.rows();
  const std::size_t m = a.cols();
  DenseMatrix w = a;  // columns get rotated in place
  DenseMatrix v = DenseMatrix::identity(m);

  const int max_sweeps = 60;
  const double tol = 1e-14;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          alpha += w(i, p) * w(i, p);
          beta += w(i, q) * w(i, q);
          gamma += w(i, p) * w(i, q);
        }
        if (std::fabs(gamma) <= tol * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        off = std::max(off, std::fabs(gamma) / std::sqrt(alpha * beta));
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = ((zeta >= 0.0) ? 1.0 : -1.0) /
                         (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < n; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < m; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (off == 0.0) break;
  }

  SvdResult out;
  out.sigma.resize(m);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> norms(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w(i, j) * w(i, j);
    norms[j] = std::sqrt(s);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });
  out.u = DenseMatrix(n, m);
  out.v = DenseMatrix(m, m);
  for (std::size_t jj = 0; jj < m; ++jj) {
    const std::size_t j = order[jj];
    out.sigma[jj] = norms[j];
    const double inv = norms[j] > 0.0 ? 1.0 / norms[j] : 0.0;
    for (std::size_t i = 0; i < n; ++i) out.u(i, jj) = w(i, j) * inv;
    for (std::size_t i = 0; i < m; ++i) out.v(i, jj) = v(i, j);
  }
  return out;
}

double projector_distance(const DenseMatrix& q1, const DenseMatrix& q2) {
  const std::size_t d = q1.rows();
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double p1 = 0.0, p2 = 0.0;
      for (std::size_t l = 0; l < q1.cols(); ++l) p1 += q1(i, l) * q1(j, l);
      for (std::size_t l = 0; l < q2.cols(); ++l) p2 += q2(i, l) * q2(j, l);
      const double diff = p1 - p2;
      s += diff * diff;
    }
  return std::sqrt(s);
}

double largest_principal_angle(const DenseMatrix& q1, const DenseMatrix& q2) {
  DenseMatrix overlap(q1.cols(), q2.cols());
  for (std::size_t i = 0; i < q1.cols(); ++i)
    for (std::size_t j = 0; j < q2.cols(); ++j) {
      double s = 0.0;
      for (std::size_t row = 0; row < q1.rows(); ++row) s += q1(row, i) * q2(row, j);
      overlap(i, j) = s;
    }
  const SvdResult svd = jacobi_svd(overlap);
  const double smin = std::clamp(svd.sigma.back(), -1.0, 1.0);
  return std::acos(smin);
}

DenseMatrix matrix_with_spectrum(std::size_t n, std::size_t m, const std::vector<double>& sigma,
                                 std::uint64_t seed) {
  const std::size_t p = sigma.size();
  const DenseMatrix u = gram_schmidt_twice(random_gaussian_matrix(n, p, rng::derive(seed, 1)));
  const DenseMatrix v = gram_schmidt_twice(random_gaussian_matrix(m, p, rng::derive(seed, 2)));
  DenseMatrix out(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < p; ++l) s += u(i, l) * sigma[l] * v(j, l);
      out(i, j) = s;
    }
  return out;
}

DenseMatrix random_gaussian_matrix(std::size_t n, std::size_t m, std::uint64_t seed) {
  rng::Stream s(seed);
  DenseMatrix out(n, m);
  for (double& x : out.data()) x = s.gaussian();
  return out;
}

DenseVector random_gaussian_vector(std::size_t n, std::uint64_t seed) {
  rng::Stream s(seed);
  DenseVector out(n);
  for (double& x : out) x = s.gaussian();
  return out;
}

std::vector<double> central_differences(std::vector<double>& param,
                                        const std::function<double()>& f, double h) {
  std::vector<double> grad(param.size(), 0.0);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + h;
    const double up = f();
    param[i] = saved - h;
    const double down = f();
    param[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace proma::oracle
