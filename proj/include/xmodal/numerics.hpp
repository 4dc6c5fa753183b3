// include/xmodal/numerics.hpp

// Copyright 2026  The xmodal Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "xmodal/matrix.hpp"

namespace xmodal {

// Norms at or below this are treated as degenerate by l2_normalize.
inline constexpr double kDegenerateNorm = 1e-12;

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// Throws DegenerateVectorError when ||v|| <= kDegenerateNorm.
std::vector<double> l2_normalize(std::span<const double> v);
// In-place variant; returns the norm before scaling.
double l2_normalize_in_place(std::span<double> v);
// Normalizes every row in place, returning the row norms.
std::vector<double> l2_normalize_rows(Matrix& m);

double cosine(std::span<const double> a, std::span<const double> b);

// c = a * b (parallel kernel).
Matrix matmul(const Matrix& a, const Matrix& b);

// Lower-triangular L with L * L^T = a. Throws NotPositiveDefiniteError
// carrying the failing pivot.
Matrix cholesky(const Matrix& a);

// Solves L * x = b for each column of b (forward substitution).
Matrix solve_lower(const Matrix& lower, const Matrix& b);
// Solves L^T * x = b for each column of b (back substitution).
Matrix solve_lower_transposed(const Matrix& lower, const Matrix& b);

struct SymEig {
  std::vector<double> values;  // descending
  Matrix vectors;              // column k pairs with values[k]
  int sweeps = 0;
};

// Cyclic Jacobi eigensolver for symmetric matrices.
//
// Eigenvalues are sorted descending; exact ties are ordered by ascending
// lexicographic comparison of the eigenvectors. Each eigenvector is signed so
// that its largest-magnitude component (first one on ties) is positive.
// Throws if 100 sweeps do not reach convergence.
SymEig sym_eig(const Matrix& a);

// Principal-component scores of the rows of x (n x d) on the leading
// `components` axes. Uses the n x n Gram matrix when n < d.
Matrix pca_project(const Matrix& x, std::size_t components);

using ScalarFunction = std::function<double(std::span<const double>)>;

// Central differences, component by component. Throws NonFiniteError with the
// parameter index when f is not finite at a probe point.
std::vector<double> finite_diff_grad(const ScalarFunction& f,
                                     std::span<const double> theta,
                                     double h = 1e-5);

// xoshiro256** seeded through splitmix64. The stream is fully specified, so
// identical seeds produce identical sequences on every platform; all
// distributions below are implemented here rather than taken from <random>,
// whose distributions are implementation-defined.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller (no cached second value).
  double normal();
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Independent child stream derived from this generator's seed and `stream`.
  // Does not advance this generator.
  SeededRng split(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace xmodal
