#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace proma {

// Counts fused multiply-add-equivalent operations. Each kernel that accepts a
// FlopCounter* only ever increments it, so counts are monotone within a call.
struct FlopCounter {
  std::uint64_t multiply_adds = 0;
  void add(std::uint64_t n) { multiply_adds += n; }
};

using DenseVector = std::vector<double>;

// Row-major dense matrix of 64-bit floats.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static DenseMatrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  DenseVector col(std::size_t j) const;
  void set_col(std::size_t j, std::span<const double> v);
  DenseMatrix transposed() const;
  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---- vector helpers ----
double dot(std::span<const double> a, std::span<const double> b, FlopCounter* flops = nullptr);
double norm(std::span<const double> v, FlopCounter* flops = nullptr);
// y += c * x
void axpy(double c, std::span<const double> x, std::span<double> y, FlopCounter* flops = nullptr);
bool all_finite(std::span<const double> v);

// ---- matrix products ----
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b, FlopCounter* flops = nullptr);
// Aᵀ B
DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b, FlopCounter* flops = nullptr);
// A Bᵀ
DenseMatrix matmul_a_bt(const DenseMatrix& a, const DenseMatrix& b, FlopCounter* flops = nullptr);
DenseVector matvec(const DenseMatrix& a, std::span<const double> x, FlopCounter* flops = nullptr);
// Aᵀ x
DenseVector matvec_t(const DenseMatrix& a, std::span<const double> x, FlopCounter* flops = nullptr);

struct QrResult {
  DenseMatrix q;  // (d, k), orthonormal columns; dropped columns are zero
  DenseMatrix r;  // (k, k), upper triangular
  std::size_t rank = 0;  // number of surviving (non-dropped) columns
};

// Reduced QR via classical Gram-Schmidt with one reorthogonalization pass.
// Columns whose residual norm falls below 1e-12 times the largest input
// column norm are dropped: their Q column is zeroed and R(j,j) = 0, so the
// projector Q Qᵀ uses only surviving columns. Requires d >= k >= 1.
QrResult qr_reduced(const DenseMatrix& m, FlopCounter* flops = nullptr);

// acc_vec minus its orthogonal projection onto span(vecs): exact complement
// projection through a reduced QR. Requires 1 <= k <= d.
DenseVector project_to_complement(const DenseVector& acc_vec, const DenseMatrix& vecs,
                                  FlopCounter* flops = nullptr);

struct DeflationStats {
  int skipped_columns = 0;  // zero-norm columns encountered (counted once each)
};

// Approximate complement projection: normalizes the columns of vecs and
// sequentially deflates acc_vec against each, `passes` times over. Zero-norm
// columns are skipped (they carry no direction). Unlike the exact kernel this
// accepts k > d; the deflation loop is well defined for any column count.
DenseVector project_to_complement_iterative(const DenseVector& acc_vec, const DenseMatrix& vecs,
                                            int passes = 2, FlopCounter* flops = nullptr,
                                            DeflationStats* stats = nullptr);

// Randomized range finder for the top-r right-singular subspace of x (n, m):
// Y = Xᵀ·randn(n,r), then power_iters rounds of Y <- Xᵀ(X Y), then QR.
// No intermediate re-orthogonalization, so precision degrades for large
// power_iters. Deterministic given rng_seed. Requires 1 <= r <= min(n, m).
DenseMatrix approx_rank_r_basis(const DenseMatrix& x, std::size_t r, int power_iters = 1,
                                std::uint64_t rng_seed = 0);

// Component of g inside span(q_left) x span(q_right):
// q_left (q_leftᵀ g q_right) q_rightᵀ, evaluated inside-out so the cost stays
// linear in the large dimensions.
DenseMatrix sandwich_project(const DenseMatrix& g, const DenseMatrix& q_left,
                             const DenseMatrix& q_right, FlopCounter* flops = nullptr);

}  // namespace proma
