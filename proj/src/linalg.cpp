#include "proma/linalg.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "proma/rng.hpp"

namespace proma {

namespace {

[[noreturn]] void dim_error(const std::string& what) { throw std::invalid_argument(what); }

}  // namespace

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseVector DenseMatrix::col(std::size_t j) const {
  DenseVector v(rows_);
  for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, j);
  return v;
}

void DenseMatrix::set_col(std::size_t j, std::span<const double> v) {
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

bool DenseMatrix::all_finite() const { return proma::all_finite(data_); }

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

double dot(std::span<const double> a, std::span<const double> b, FlopCounter* flops) {
  if (a.size() != b.size()) dim_error("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  if (flops) flops->add(a.size());
  return s;
}

double norm(std::span<const double> v, FlopCounter* flops) {
  double s = 0.0;
  for (double x : v) s += x * x;
  if (flops) flops->add(v.size());
  return std::sqrt(s);
}

void axpy(double c, std::span<const double> x, std::span<double> y, FlopCounter* flops) {
  if (x.size() != y.size()) dim_error("axpy: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
  if (flops) flops->add(x.size());
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b, FlopCounter* flops) {
  if (a.cols() != b.rows()) dim_error("matmul: inner dimension mismatch");
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t l = 0; l < a.cols(); ++l) {
      const double ail = a(i, l);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += ail * b(l, j);
    }
  if (flops) flops->add(static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols());
  return out;
}

DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b, FlopCounter* flops) {
  if (a.rows() != b.rows()) dim_error("matmul_at_b: row count mismatch");
  DenseMatrix out(a.cols(), b.cols());
  for (std::size_t l = 0; l < a.rows(); ++l)
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ali = a(l, i);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += ali * b(l, j);
    }
  if (flops) flops->add(static_cast<std::uint64_t>(a.cols()) * a.rows() * b.cols());
  return out;
}

DenseMatrix matmul_a_bt(const DenseMatrix& a, const DenseMatrix& b, FlopCounter* flops) {
  if (a.cols() != b.cols()) dim_error("matmul_a_bt: column count mismatch");
  DenseMatrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < a.cols(); ++l) s += a(i, l) * b(j, l);
      out(i, j) = s;
    }
  if (flops) flops->add(static_cast<std::uint64_t>(a.rows()) * a.cols() * b.rows());
  return out;
}

DenseVector matvec(const DenseMatrix& a, std::span<const double> x, FlopCounter* flops) {
  if (a.cols() != x.size()) dim_error("matvec: dimension mismatch");
  DenseVector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
  if (flops) flops->add(static_cast<std::uint64_t>(a.rows()) * a.cols());
  return y;
}

DenseVector matvec_t(const DenseMatrix& a, std::span<const double> x, FlopCounter* flops) {
  if (a.rows() != x.size()) dim_error("matvec_t: dimension mismatch");
  DenseVector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += a(i, j) * xi;
  }
  if (flops) flops->add(static_cast<std::uint64_t>(a.rows()) * a.cols());
  return y;
}

QrResult qr_reduced(const DenseMatrix& m, FlopCounter* flops) {
  const std::size_t d = m.rows();
  const std::size_t k = m.cols();
  if (k < 1 || d < k) dim_error("qr_reduced: requires d >= k >= 1");
  if (!m.all_finite()) throw std::invalid_argument("qr_reduced: non-finite input");

  double max_colnorm = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += m(i, j) * m(i, j);
    max_colnorm = std::max(max_colnorm, std::sqrt(s));
  }
  if (flops) flops->add(static_cast<std::uint64_t>(d) * k);
  const double drop_tol = 1e-12 * max_colnorm;

  QrResult out;
  out.q = DenseMatrix(d, k);
  out.r = DenseMatrix(k, k);

  DenseVector v(d);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < d; ++i) v[i] = m(i, j);
    // Classical Gram-Schmidt, run twice: the second pass mops up the
    // cancellation error of the first.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) {
        double h = 0.0;
        for (std::size_t row = 0; row < d; ++row) h += out.q(row, i) * v[row];
        out.r(i, j) += h;
        for (std::size_t row = 0; row < d; ++row) v[row] -= h * out.q(row, i);
        if (flops) flops->add(2 * static_cast<std::uint64_t>(d));
      }
    }
    const double nrm = norm(v, flops);
    if (nrm <= drop_tol) {
      // Rank-deficient column: drop it. Q keeps a zero column so the
      // projector Q Qᵀ only sees the surviving directions.
      out.r(j, j) = 0.0;
      continue;
    }
    const double inv = 1.0 / nrm;
    for (std::size_t row = 0; row < d; ++row) out.q(row, j) = v[row] * inv;
    if (flops) flops->add(d);
    out.r(j, j) = nrm;
    out.rank += 1;
  }
  return out;
}

DenseVector project_to_complement(const DenseVector& acc_vec, const DenseMatrix& vecs,
                                  FlopCounter* flops) {
  const std::size_t d = vecs.rows();
  const std::size_t k = vecs.cols();
  if (acc_vec.size() != d) dim_error("project_to_complement: vector/matrix dimension mismatch");
  if (k < 1 || k > d) dim_error("project_to_complement: requires 1 <= k <= d");

  const QrResult qr = qr_reduced(vecs, flops);
  const DenseVector coeff = matvec_t(qr.q, acc_vec, flops);
  DenseVector out = acc_vec;
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += qr.q(i, j) * coeff[j];
    out[i] -= s;
  }
  if (flops) flops->add(static_cast<std::uint64_t>(d) * k);
  return out;
}

DenseVector project_to_complement_iterative(const DenseVector& acc_vec, const DenseMatrix& vecs,
                                            int passes, FlopCounter* flops,
                                            DeflationStats* stats) {
  const std::size_t d = vecs.rows();
  const std::size_t k = vecs.cols();
  if (acc_vec.size() != d) dim_error("project_to_complement_iterative: dimension mismatch");
  if (k < 1) dim_error("project_to_complement_iterative: requires k >= 1");
  if (passes < 0) dim_error("project_to_complement_iterative: passes must be >= 0");

  // U = vecs with unit columns; zero-norm columns are flagged and skipped.
  DenseMatrix u(d, k);
  std::vector<bool> alive(k, true);
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += vecs(i, j) * vecs(i, j);
    const double nrm = std::sqrt(s);
    if (nrm < std::numeric_limits<double>::min()) {
      alive[j] = false;
      if (stats) stats->skipped_columns += 1;
      continue;
    }
    const double inv = 1.0 / nrm;
    for (std::size_t i = 0; i < d; ++i) u(i, j) = vecs(i, j) * inv;
  }
  if (flops) flops->add(2 * static_cast<std::uint64_t>(d) * k);

  DenseVector acc = acc_vec;
  for (int pass = 0; pass < passes; ++pass) {
    for (std::size_t j = 0; j < k; ++j) {
      if (!alive[j]) continue;
      double h = 0.0;
      for (std::size_t i = 0; i < d; ++i) h += acc[i] * u(i, j);
      for (std::size_t i = 0; i < d; ++i) acc[i] -= h * u(i, j);
      if (flops) flops->add(2 * static_cast<std::uint64_t>(d));
    }
  }
  return acc;
}

DenseMatrix approx_rank_r_basis(const DenseMatrix& x, std::size_t r, int power_iters,
                                std::uint64_t rng_seed) {
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  if (r < 1 || r > std::min(n, m))
    dim_error("approx_rank_r_basis: requires 1 <= r <= min(n, m); clamp r first");
  if (!x.all_finite()) throw std::invalid_argument("approx_rank_r_basis: non-finite input");

  rng::Stream stream(rng_seed);
  DenseMatrix omega(n, r);
  for (double& v : omega.data()) v = stream.gaussian();

  DenseMatrix y = matmul_at_b(x, omega);  // (m, r)
  for (int it = 0; it < power_iters; ++it) {
    const DenseMatrix z = matmul(x, y);  // (n, r)
    y = matmul_at_b(x, z);               // (m, r)
  }
  return qr_reduced(y).q;
}

DenseMatrix sandwich_project(const DenseMatrix& g, const DenseMatrix& q_left,
                             const DenseMatrix& q_right, FlopCounter* flops) {
  if (q_left.rows() != g.rows()) dim_error("sandwich_project: q_left rows must match g rows");
  if (q_right.rows() != g.cols()) dim_error("sandwich_project: q_right rows must match g cols");
  const DenseMatrix t1 = matmul_at_b(q_left, g, flops);   // (r_l, q)
  const DenseMatrix core = matmul(t1, q_right, flops);    // (r_l, r_r)
  const DenseMatrix t2 = matmul(q_left, core, flops);     // (p, r_r)
  return matmul_a_bt(t2, q_right, flops);                 // (p, q)
}

}  // namespace proma
