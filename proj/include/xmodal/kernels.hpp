// include/xmodal/kernels.hpp

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

#include <cstddef>
#include <span>

#include "xmodal/matrix.hpp"

// Dense kernels on the hot paths (forward/backward matmuls, index scoring,
// optimizer updates). The default namespace holds the OpenMP versions;
// kernels::serial holds plain reference loops used by the tests and the
// benchmark. Both accumulate every output element in the same order, so
// their results are bit-identical regardless of the thread count.

namespace xmodal::kernels {

// c = a * b, a: m x k, b: k x n.
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c);
// c = a * b^T, a: m x k, b: n x k.
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
// c = a^T * b, a: k x m, b: k x n.
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
// scores[i] = <rows.row(i), query>.
void score_rows(const Matrix& rows, std::span<const double> query,
                std::span<double> scores);

struct AdamCoefficients {
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

// In-place bias-corrected Adam update of one parameter tensor.
void adam_update(std::span<double> param, std::span<const double> grad,
                 std::span<double> first_moment,
                 std::span<double> second_moment,
                 const AdamCoefficients& coef);

// Number of threads the parallel kernels will use.
int max_threads();

}  // namespace xmodal::kernels

namespace xmodal::kernels::serial {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
void score_rows(const Matrix& rows, std::span<const double> query,
                std::span<double> scores);
void adam_update(std::span<double> param, std::span<const double> grad,
                 std::span<double> first_moment,
                 std::span<double> second_moment,
                 const AdamCoefficients& coef);

}  // namespace xmodal::kernels::serial
