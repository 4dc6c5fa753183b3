// src/kernels.cpp

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

#include "xmodal/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace xmodal::kernels {
namespace {

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::int64_t kParallelWork = 1 << 15;

void check_shape(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void prepare(Matrix& c, std::size_t rows, std::size_t cols) {
  if (c.rows() != rows || c.cols() != cols) c = Matrix(rows, cols);
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  check_shape(a.cols() == b.rows(), "gemm_nn: inner dimension mismatch");
  const auto m = static_cast<std::int64_t>(a.rows());
  const std::size_t k = a.cols(), n = b.cols();
  prepare(c, a.rows(), n);
  const std::int64_t work = m * static_cast<std::int64_t>(k * n);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  check_shape(a.cols() == b.cols(), "gemm_nt: inner dimension mismatch");
  const auto m = static_cast<std::int64_t>(a.rows());
  const std::size_t k = a.cols(), n = b.rows();
  prepare(c, a.rows(), n);
  const std::int64_t work = m * static_cast<std::int64_t>(k * n);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c(i, j) = acc;
    }
  }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  check_shape(a.rows() == b.rows(), "gemm_tn: inner dimension mismatch");
  const std::size_t k = a.rows(), n = b.cols();
  const auto m = static_cast<std::int64_t>(a.cols());
  prepare(c, a.cols(), n);
  const std::int64_t work = m * static_cast<std::int64_t>(k * n);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(p, i);
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void score_rows(const Matrix& rows, std::span<const double> query,
                std::span<double> scores) {
  check_shape(rows.cols() == query.size(), "score_rows: dimension mismatch");
  check_shape(scores.size() == rows.rows(), "score_rows: output size");
  const auto m = static_cast<std::int64_t>(rows.rows());
  const std::size_t k = rows.cols();
  const std::int64_t work = m * static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::int64_t i = 0; i < m; ++i) {
    const double* r = rows.data() + i * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += r[p] * query[p];
    scores[i] = acc;
  }
}

void adam_update(std::span<double> param, std::span<const double> grad,
                 std::span<double> first_moment,
                 std::span<double> second_moment,
                 const AdamCoefficients& coef) {
  check_shape(param.size() == grad.size() &&
                  param.size() == first_moment.size() &&
                  param.size() == second_moment.size(),
              "adam_update: size mismatch");
  const auto n = static_cast<std::int64_t>(param.size());
#pragma omp parallel for schedule(static) if (n > kParallelWork)
  for (std::int64_t i = 0; i < n; ++i) {
    const double g = grad[i];
    first_moment[i] = coef.beta1 * first_moment[i] + (1.0 - coef.beta1) * g;
    second_moment[i] = coef.beta2 * second_moment[i] + (1.0 - coef.beta2) * g * g;
    const double m_hat = first_moment[i] / coef.bias_correction1;
    const double v_hat = second_moment[i] / coef.bias_correction2;
    param[i] -= coef.learning_rate * m_hat / (std::sqrt(v_hat) + coef.epsilon);
  }
}

}  // namespace xmodal::kernels

namespace xmodal::kernels::serial {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.rows()) throw std::invalid_argument("gemm_nn: shape");
  c = Matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      c(i, j) = acc;
    }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.cols()) throw std::invalid_argument("gemm_nt: shape");
  c = Matrix(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(j, p);
      c(i, j) = acc;
    }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows() != b.rows()) throw std::invalid_argument("gemm_tn: shape");
  c = Matrix(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.rows(); ++p) acc += a(p, i) * b(p, j);
      c(i, j) = acc;
    }
}

void score_rows(const Matrix& rows, std::span<const double> query,
                std::span<double> scores) {
  if (rows.cols() != query.size() || scores.size() != rows.rows())
    throw std::invalid_argument("score_rows: shape");
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < rows.cols(); ++p) acc += rows(i, p) * query[p];
    scores[i] = acc;
  }
}

void adam_update(std::span<double> param, std::span<const double> grad,
                 std::span<double> first_moment,
                 std::span<double> second_moment,
                 const AdamCoefficients& coef) {
  if (param.size() != grad.size() || param.size() != first_moment.size() ||
      param.size() != second_moment.size())
    throw std::invalid_argument("adam_update: size mismatch");
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    first_moment[i] = coef.beta1 * first_moment[i] + (1.0 - coef.beta1) * g;
    second_moment[i] = coef.beta2 * second_moment[i] + (1.0 - coef.beta2) * g * g;
    const double m_hat = first_moment[i] / coef.bias_correction1;
    const double v_hat = second_moment[i] / coef.bias_correction2;
    param[i] -= coef.learning_rate * m_hat / (std::sqrt(v_hat) + coef.epsilon);
  }
}

}  // namespace xmodal::kernels::serial
