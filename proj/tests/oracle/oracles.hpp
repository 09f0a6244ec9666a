#pragma once

// Independent reference implementations used by tests and the `selftest`
// subcommand. Everything here is deliberately written against the public
// types only, avoiding the code paths it is used to check: projections go
// through explicit normal equations, SVD is one-sided Jacobi, derivatives
// are central finite differences.

#include <cstdint>
#include <functional>
#include <vector>

#include "proma/linalg.hpp"

namespace proma::oracle {

// Solves A x = b by Gaussian elimination with partial pivoting (small, dense).
DenseVector solve_linear(DenseMatrix a, DenseVector b);

// acc - V (VᵀV)⁻¹ Vᵀ acc, the complement projection via normal equations.
DenseVector project_complement_pseudoinverse(const DenseVector& acc, const DenseMatrix& vecs);

// Classical Gram-Schmidt run twice; rank-deficient columns come back zero.
DenseMatrix gram_schmidt_twice(const DenseMatrix& m);

struct SvdResult {
  DenseMatrix u;          // (n, p) left singular vectors
  std::vector<double> sigma;  // p values, descending
  DenseMatrix v;          // (m, p) right singular vectors
};

// Thin SVD by one-sided Jacobi rotations; intended for inputs up to 64x64.
SvdResult jacobi_svd(const DenseMatrix& a);

// Frobenius distance between the orthogonal projectors Q1 Q1ᵀ and Q2 Q2ᵀ.
double projector_distance(const DenseMatrix& q1, const DenseMatrix& q2);

// Largest principal angle (radians) between the column spans of two
// orthonormal-column matrices with the same column count.
double largest_principal_angle(const DenseMatrix& q1, const DenseMatrix& q2);

// Matrix with the given singular values planted on a random pair of
// orthonormal factors. sigma.size() <= min(n, m).
DenseMatrix matrix_with_spectrum(std::size_t n, std::size_t m, const std::vector<double>& sigma,
                                 std::uint64_t seed);

DenseMatrix random_gaussian_matrix(std::size_t n, std::size_t m, std::uint64_t seed);
DenseVector random_gaussian_vector(std::size_t n, std::uint64_t seed);

// Central-difference gradient of f with respect to a parameter vector that f
// reads through `param` (caller mutates in place).
std::vector<double> central_differences(std::vector<double>& param,
                                        const std::function<double()>& f, double h = 1e-5);

}  // namespace proma::oracle
