// include/xmodal/linker_model.hpp

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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmodal/embedding_io.hpp"
#include "xmodal/matrix.hpp"

namespace xmodal {

enum class Activation { kRelu, kGelu };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

struct LinkerConfig {
  std::size_t dim_speaker_in = 192;
  std::size_t dim_text_in = 768;
  std::size_t common_dim = 768;
  std::size_t n_transform_layers = 2;
  Activation activation = Activation::kRelu;
  // When set, the last transform layer is linear (no activation) before the
  // final normalization.
  bool linear_output = true;
  bool learnable_temperature = true;
  double init_temperature = 0.07;
  double aam_margin = 0.2;
  double aam_scale = 30.0;
  std::size_t n_speakers_train = 0;  // 0 disables the AAM head

  void validate() const;
  bool operator==(const LinkerConfig&) const = default;
};

void to_json(nlohmann::json& j, const LinkerConfig& c);
void from_json(const nlohmann::json& j, LinkerConfig& c);

// Temperature is clamped to this range after each optimizer step.
inline constexpr double kMinTemperature = 0.01;
inline constexpr double kMaxTemperature = 1.0;

struct DenseLayer {
  Matrix weight;  // in x out
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

struct Branch {
  DenseLayer projection;
  std::vector<DenseLayer> transform;

  bool operator==(const Branch&) const = default;
};

struct ParamTensor {
  std::string name;
  std::span<double> values;
  std::size_t rows;
  std::size_t cols;
};

struct ConstParamTensor {
  std::string name;
  std::span<const double> values;
  std::size_t rows;
  std::size_t cols;
};

// Trainable state of the linking heads. The same type doubles as the
// gradient container.
struct LinkerParams {
  Branch speaker;
  Branch text;
  double log_temperature = 0.0;
  Matrix aam_weights;  // n_speakers_train x common_dim, empty if disabled

  double temperature() const;

  // Stable, documented order: speaker branch, text branch, log_temperature,
  // aam_weights (when present). Names look like "speaker.transform.1.weight".
  std::vector<ParamTensor> tensors();
  std::vector<ConstParamTensor> tensors() const;

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  bool operator==(const LinkerParams&) const = default;
};

// Closed-form parameter count for a config.
std::size_t parameter_count(const LinkerConfig& config);

// Same shapes as `params`, all zero.
LinkerParams zeros_like(const LinkerParams& params);

// Glorot-uniform weights, zero biases, log(init_temperature), unit-norm AAM
// rows. Deterministic in `seed`.
LinkerParams init_params(const LinkerConfig& config, std::uint64_t seed);

struct BranchCache {
  Matrix input;
  Matrix projection_raw;              // x W + b, before normalization
  std::vector<double> projection_norms;
  std::vector<Matrix> pre_activations;  // one per transform layer
  std::vector<Matrix> activations;      // layer outputs, last is pre-normalization
  std::vector<double> transform_norms;
};

struct ForwardOutput {
  Matrix x_s_p;  // speaker, projection level, unit rows
  Matrix x_t_p;  // text, projection level, unit rows
  Matrix x_s_t;  // speaker, transform level, unit rows
  Matrix x_t_t;  // text, transform level, unit rows
  BranchCache speaker_cache;
  BranchCache text_cache;
};

// Projection output is normalize(x W + b). The transform stack consumes the
// un-normalized projection activations, and its output is normalized.
ForwardOutput forward(const LinkerParams& params, const LinkerConfig& config,
                      const Matrix& speaker_rows, const Matrix& text_rows);

// Projection-level embeddings (unit rows) for one modality only.
Matrix project(const LinkerParams& params, const LinkerConfig& config,
               Modality modality, const Matrix& rows);

struct OutputGrads {
  Matrix s_p, t_p, s_t, t_t;  // empty matrix = zero gradient
};

// Gradients of the layer weights/biases given gradients with respect to the
// four normalized outputs. log_temperature and aam_weights are left zero; the
// losses fill them in.
LinkerParams backward(const LinkerParams& params, const LinkerConfig& config,
                      const ForwardOutput& fwd, const OutputGrads& grads);

struct Checkpoint {
  LinkerConfig config;
  LinkerParams params;
  nlohmann::json metadata = nlohmann::json::object();
};

// Binary container: "EMB1", u16 version = 2, u32 JSON length, JSON header
// (config + metadata), u32 tensor count, then per tensor u16 name length,
// name, u32 cols, u64 rows, f64 row-major payload.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace xmodal
