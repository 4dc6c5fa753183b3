// include/xmodal/losses.hpp

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
#include <vector>

#include "xmodal/matrix.hpp"

// Contrastive and classification objectives with analytic gradients.
//
// Similarity matrices hold raw dot products S[i][j] = x_s^i . x_t^j of unit
// rows; every contrastive loss divides by the temperature tau internally and
// reports dL/dS and dL/dtau.

namespace xmodal {

// Speaker class index per batch row.
using BatchLabels = std::vector<std::size_t>;

struct LossResult {
  double loss = 0.0;
  Matrix grad;                   // dL/dS
  double grad_temperature = 0.0; // dL/dtau
};

// S = a * b^T.
Matrix similarity(const Matrix& a, const Matrix& b);

// Mean over rows i of -log softmax_i(S[i] / tau)[i].
LossResult info_nce_directional(const Matrix& s, double tau);

// (info_nce(S) + info_nce(S^T)) / 2. The gradient is with respect to S.
LossResult cts_pair(const Matrix& s, double tau);

struct TotalLoss {
  double loss = 0.0;
  double projection_loss = 0.0;
  double transform_loss = 0.0;
  Matrix grad_projection;  // dL/dS_p
  Matrix grad_transform;   // dL/dS_t
  double grad_temperature = 0.0;
};

// cts_pair(S_p) + cts_pair(S_t) with one shared temperature.
TotalLoss cts_total(const Matrix& s_projection, const Matrix& s_transform, double tau);

// Sum over rows i of -1/|P(i)| sum_{p in P(i)} log softmax_i(S[i] / tau)[p],
// where P(i) = {j : labels[j] == labels[i]} includes i itself.
LossResult sup_con_directional(const Matrix& s, const BatchLabels& labels, double tau);

// Symmetrized supervised loss per branch, summed over both branches.
TotalLoss sup_cts_total(const Matrix& s_projection, const Matrix& s_transform,
                        const BatchLabels& labels, double tau);

struct AamResult {
  double loss = 0.0;
  Matrix grad_outputs;  // dL/d outputs
  Matrix grad_weights;  // dL/d class weights
};

// Additive angular margin softmax: logits s*cos(theta_j) for j != y and
// s*cos(theta_y + m) for the true class, cross-entropy averaged over the
// batch. When theta_y + m > pi the target logit falls back to
// s*(cos(theta_y) - m*sin(m)). Cosines are the plain dot products of the
// (unit) output rows and (unit) class weight rows.
AamResult aam_softmax(const Matrix& outputs, const BatchLabels& labels, const Matrix& weights,
                      double margin, double scale);

// cts_total + lambda * aam.
double regularized_total(double cts_total_loss, double aam_loss, double lambda);

}  // namespace xmodal
