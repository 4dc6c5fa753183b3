// src/losses.cpp

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

#include "xmodal/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "xmodal/error.hpp"
#include "xmodal/kernels.hpp"

namespace xmodal {
namespace {

void check_square(const Matrix& s, double tau) {
  if (s.rows() == 0 || s.rows() != s.cols())
    throw std::invalid_argument("similarity matrix must be square and non-empty");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("temperature must be positive");
  for (std::size_t i = 0; i < s.size(); ++i)
    if (!std::isfinite(s.values()[i])) throw NonFiniteError("non-finite similarity", i);
}

// Row-wise softmax of s / tau (max subtracted after scaling) and the row
// log-normalizers, so log p_ij = s_ij / tau - log_norm[i].
void softmax_rows(const Matrix& s, double tau, Matrix& probs, std::vector<double>& log_norm) {
  const std::size_t n = s.rows();
  probs = Matrix(n, n);
  log_norm.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = s(i, 0) / tau;
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, s(i, j) / tau);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs(i, j) = std::exp(s(i, j) / tau - mx);
      sum += probs(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) probs(i, j) /= sum;
    log_norm[i] = mx + std::log(sum);
  }
}

// dL/dtau from dL/dZ with Z = S / tau.
double temperature_grad(const Matrix& s, const Matrix& grad_z, double tau) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += grad_z.values()[i] * s.values()[i];
  return -acc / (tau * tau);
}

LossResult finish(double loss, Matrix grad_z, const Matrix& s, double tau) {
  LossResult r;
  r.loss = loss;
  r.grad_temperature = temperature_grad(s, grad_z, tau);
  for (double& g : grad_z.values()) g /= tau;
  r.grad = std::move(grad_z);
  return r;
}

LossResult symmetrize(const LossResult& forward, const LossResult& backward_dir) {
  LossResult r;
  r.loss = 0.5 * (forward.loss + backward_dir.loss);
  const Matrix back_t = backward_dir.grad.transposed();
  r.grad = Matrix(forward.grad.rows(), forward.grad.cols());
  for (std::size_t i = 0; i < r.grad.size(); ++i)
    r.grad.values()[i] = 0.5 * (forward.grad.values()[i] + back_t.values()[i]);
  r.grad_temperature = 0.5 * (forward.grad_temperature + backward_dir.grad_temperature);
  return r;
}

TotalLoss combine(LossResult p, LossResult t) {
  TotalLoss total;
  total.projection_loss = p.loss;
  total.transform_loss = t.loss;
  total.loss = p.loss + t.loss;
  total.grad_projection = std::move(p.grad);
  total.grad_transform = std::move(t.grad);
  total.grad_temperature = p.grad_temperature + t.grad_temperature;
  return total;
}

}  // namespace

Matrix similarity(const Matrix& a, const Matrix& b) {
  Matrix s;
  kernels::gemm_nt(a, b, s);
  return s;
}

LossResult info_nce_directional(const Matrix& s, double tau) {
  check_square(s, tau);
  const std::size_t n = s.rows();
  Matrix probs;
  std::vector<double> log_norm;
  softmax_rows(s, tau, probs, log_norm);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) loss += log_norm[i] - s(i, i) / tau;
  loss /= static_cast<double>(n);

  Matrix grad_z = probs;
  for (std::size_t i = 0; i < n; ++i) grad_z(i, i) -= 1.0;
  for (double& g : grad_z.values()) g /= static_cast<double>(n);
  return finish(loss, std::move(grad_z), s, tau);
}

LossResult cts_pair(const Matrix& s, double tau) {
  return symmetrize(info_nce_directional(s, tau), info_nce_directional(s.transposed(), tau));
}

TotalLoss cts_total(const Matrix& s_projection, const Matrix& s_transform, double tau) {
  if (s_projection.rows() != s_transform.rows())
    throw std::invalid_argument("cts_total: batch size mismatch between branches");
  return combine(cts_pair(s_projection, tau), cts_pair(s_transform, tau));
}

LossResult sup_con_directional(const Matrix& s, const BatchLabels& labels, double tau) {
  check_square(s, tau);
  const std::size_t n = s.rows();
  if (labels.size() != n) throw std::invalid_argument("sup_con: label count does not match batch");
  Matrix probs;
  std::vector<double> log_norm;
  softmax_rows(s, tau, probs, log_norm);

  double loss = 0.0;
  Matrix grad_z = probs;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t positives = 0;
    for (std::size_t j = 0; j < n; ++j) positives += labels[j] == labels[i];
    const double inv = 1.0 / static_cast<double>(positives);
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (labels[j] != labels[i]) continue;
      row += log_norm[i] - s(i, j) / tau;
      grad_z(i, j) -= inv;
    }
    loss += inv * row;
  }
  return finish(loss, std::move(grad_z), s, tau);
}

TotalLoss sup_cts_total(const Matrix& s_projection, const Matrix& s_transform,
                        const BatchLabels& labels, double tau) {
  if (s_projection.rows() != s_transform.rows())
    throw std::invalid_argument("sup_cts_total: batch size mismatch between branches");
  auto pair = [&](const Matrix& s) {
    return symmetrize(sup_con_directional(s, labels, tau),
                      sup_con_directional(s.transposed(), labels, tau));
  };
  return combine(pair(s_projection), pair(s_transform));
}

AamResult aam_softmax(const Matrix& outputs, const BatchLabels& labels, const Matrix& weights,
                      double margin, double scale) {
  const std::size_t n = outputs.rows(), classes = weights.rows();
  if (n == 0) throw std::invalid_argument("aam_softmax: empty batch");
  if (labels.size() != n) throw std::invalid_argument("aam_softmax: label count does not match batch");
  if (weights.cols() != outputs.cols()) throw std::invalid_argument("aam_softmax: dimension mismatch");
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] >= classes)
      throw std::out_of_range("aam_softmax: label " + std::to_string(labels[i]) + " out of range");

  Matrix cosines;
  kernels::gemm_nt(outputs, weights, cosines);
  Matrix dcos_dlogit(n, classes);  // d(logit)/d(cos), zero where clamped
  for (std::size_t i = 0; i < cosines.size(); ++i) {
    double& c = cosines.values()[i];
    if (std::abs(c) > 1.0 + 1e-6)
      throw Error("aam_softmax: |cosine| exceeds 1; class weights or outputs not unit-norm");
    if (std::abs(c) > 1.0) {
      c = std::clamp(c, -1.0, 1.0);
      dcos_dlogit.values()[i] = 0.0;
    } else {
      dcos_dlogit.values()[i] = scale;
    }
  }

  const double cos_m = std::cos(margin), sin_m = std::sin(margin);
  const double threshold = -cos_m;  // cos(pi - m)
  Matrix logits(n, classes);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < classes; ++j) logits(i, j) = scale * cosines(i, j);
    const std::size_t y = labels[i];
    const double c = cosines(i, y);
    double phi, dphi;
    if (c >= threshold) {
      const double sin_t = std::sqrt(std::max(0.0, 1.0 - c * c));
      phi = c * cos_m - sin_t * sin_m;
      dphi = sin_t > 1e-12 ? cos_m + sin_m * c / sin_t : cos_m;
    } else {
      phi = c - margin * sin_m;
      dphi = 1.0;
    }
    logits(i, y) = scale * phi;
    dcos_dlogit(i, y) *= dphi;
  }

  AamResult r;
  Matrix grad_cos(n, classes);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, logits(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) sum += std::exp(logits(i, j) - mx);
    const double log_norm = mx + std::log(sum);
    r.loss += log_norm - logits(i, labels[i]);
    for (std::size_t j = 0; j < classes; ++j) {
      double g = std::exp(logits(i, j) - log_norm);
      if (j == labels[i]) g -= 1.0;
      grad_cos(i, j) = g / static_cast<double>(n) * dcos_dlogit(i, j);
    }
  }
  r.loss /= static_cast<double>(n);
  kernels::gemm_nn(grad_cos, weights, r.grad_outputs);
  kernels::gemm_tn(grad_cos, outputs, r.grad_weights);
  return r;
}

double regularized_total(double cts_total_loss, double aam_loss, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  return cts_total_loss + lambda * aam_loss;
}

}  // namespace xmodal
