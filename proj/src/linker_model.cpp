// src/linker_model.cpp

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

#include "xmodal/linker_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "binary_io.hpp"
#include "xmodal/error.hpp"
#include "xmodal/kernels.hpp"
#include "xmodal/numerics.hpp"

namespace xmodal {
namespace fs = std::filesystem;

std::string_view to_string(Activation a) { return a == Activation::kRelu ? "relu" : "gelu"; }

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "gelu") return Activation::kGelu;
  throw InputError("unknown activation '" + std::string(s) + "'");
}

void LinkerConfig::validate() const {
  if (dim_speaker_in == 0 || dim_text_in == 0) throw InputError("input dims must be positive");
  if (common_dim == 0) throw InputError("common_dim must be positive");
  if (n_transform_layers == 0) throw InputError("n_transform_layers must be positive");
  if (!(init_temperature > 0.0) || !std::isfinite(init_temperature))
    throw InputError("init_temperature must be positive");
  if (!std::isfinite(aam_margin) || !std::isfinite(aam_scale))
    throw InputError("AAM margin and scale must be finite");
}

void to_json(nlohmann::json& j, const LinkerConfig& c) {
  j = nlohmann::json{{"dim_speaker_in", c.dim_speaker_in},
                     {"dim_text_in", c.dim_text_in},
                     {"common_dim", c.common_dim},
                     {"n_transform_layers", c.n_transform_layers},
                     {"activation", to_string(c.activation)},
                     {"linear_output", c.linear_output},
                     {"learnable_temperature", c.learnable_temperature},
                     {"init_temperature", c.init_temperature},
                     {"aam_margin", c.aam_margin},
                     {"aam_scale", c.aam_scale},
                     {"n_speakers_train", c.n_speakers_train}};
}

void from_json(const nlohmann::json& j, LinkerConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "dim_speaker_in") c.dim_speaker_in = value.get<std::size_t>();
    else if (key == "dim_text_in") c.dim_text_in = value.get<std::size_t>();
    else if (key == "common_dim") c.common_dim = value.get<std::size_t>();
    else if (key == "n_transform_layers") c.n_transform_layers = value.get<std::size_t>();
    else if (key == "activation") c.activation = parse_activation(value.get<std::string>());
    else if (key == "linear_output") c.linear_output = value.get<bool>();
    else if (key == "learnable_temperature") c.learnable_temperature = value.get<bool>();
    else if (key == "init_temperature") c.init_temperature = value.get<double>();
    else if (key == "aam_margin") c.aam_margin = value.get<double>();
    else if (key == "aam_scale") c.aam_scale = value.get<double>();
    else if (key == "n_speakers_train") c.n_speakers_train = value.get<std::size_t>();
    else throw InputError("unknown linker config key '" + key + "'");
  }
}

double LinkerParams::temperature() const { return std::exp(log_temperature); }

namespace {

template <typename Tensor, typename Self>
std::vector<Tensor> collect_tensors(Self& p) {
  std::vector<Tensor> out;
  auto add_layer = [&](const std::string& prefix, auto& layer) {
    out.push_back({prefix + ".weight", layer.weight.values(), layer.weight.rows(),
                   layer.weight.cols()});
    out.push_back({prefix + ".bias", layer.bias, 1, layer.bias.size()});
  };
  auto add_branch = [&](const std::string& name, auto& branch) {
    add_layer(name + ".projection", branch.projection);
    for (std::size_t l = 0; l < branch.transform.size(); ++l)
      add_layer(name + ".transform." + std::to_string(l), branch.transform[l]);
  };
  add_branch("speaker", p.speaker);
  add_branch("text", p.text);
  out.push_back({"log_temperature", {&p.log_temperature, 1}, 1, 1});
  if (!p.aam_weights.empty())
    out.push_back({"aam_weights", p.aam_weights.values(), p.aam_weights.rows(),
                   p.aam_weights.cols()});
  return out;
}

DenseLayer zero_layer(std::size_t in, std::size_t out) {
  return DenseLayer{Matrix(in, out), std::vector<double>(out, 0.0)};
}

Branch zero_branch(std::size_t in, const LinkerConfig& c) {
  Branch b;
  b.projection = zero_layer(in, c.common_dim);
  for (std::size_t l = 0; l < c.n_transform_layers; ++l)
    b.transform.push_back(zero_layer(c.common_dim, c.common_dim));
  return b;
}

LinkerParams zero_params(const LinkerConfig& c) {
  LinkerParams p;
  p.speaker = zero_branch(c.dim_speaker_in, c);
  p.text = zero_branch(c.dim_text_in, c);
  if (c.n_speakers_train > 0) p.aam_weights = Matrix(c.n_speakers_train, c.common_dim);
  return p;
}

}  // namespace

std::vector<ParamTensor> LinkerParams::tensors() {
  return collect_tensors<ParamTensor>(*this);
}

std::vector<ConstParamTensor> LinkerParams::tensors() const {
  return collect_tensors<ConstParamTensor>(*this);
}

std::size_t LinkerParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.values.size();
  return n;
}

std::vector<double> LinkerParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& t : tensors()) flat.insert(flat.end(), t.values.begin(), t.values.end());
  return flat;
}

void LinkerParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("assign: size mismatch");
  std::size_t offset = 0;
  for (auto& t : tensors()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.values.size(),
                t.values.begin());
    offset += t.values.size();
  }
}

std::size_t parameter_count(const LinkerConfig& c) {
  const std::size_t d = c.common_dim;
  const std::size_t transform = c.n_transform_layers * (d * d + d);
  return (c.dim_speaker_in * d + d) + (c.dim_text_in * d + d) + 2 * transform + 1 +
         c.n_speakers_train * d;
}

LinkerParams zeros_like(const LinkerParams& params) {
  LinkerParams z = params;
  for (auto& t : z.tensors()) std::fill(t.values.begin(), t.values.end(), 0.0);
  return z;
}

LinkerParams init_params(const LinkerConfig& config, std::uint64_t seed) {
  config.validate();
  LinkerParams p = zero_params(config);
  SeededRng rng(seed);
  auto glorot = [&](Matrix& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (double& x : w.values()) x = rng.uniform(-limit, limit);
  };
  for (Branch* b : {&p.speaker, &p.text}) {
    glorot(b->projection.weight);
    for (auto& layer : b->transform) glorot(layer.weight);
  }
  p.log_temperature = std::log(config.init_temperature);
  if (!p.aam_weights.empty()) {
    glorot(p.aam_weights);
    l2_normalize_rows(p.aam_weights);
  }
  return p;
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

double activate(double x, Activation a) {
  if (a == Activation::kRelu) return x > 0.0 ? x : 0.0;
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double activate_grad(double x, Activation a) {
  if (a == Activation::kRelu) return x > 0.0 ? 1.0 : 0.0;
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

void add_bias(Matrix& m, const std::vector<double>& bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

void check_input(const Matrix& x, std::size_t dim, const char* which) {
  if (x.cols() != dim)
    throw InputError(std::string(which) + " input dim " + std::to_string(x.cols()) +
                     " does not match model dim " + std::to_string(dim));
  const auto v = x.values();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) throw NonFiniteError(std::string("non-finite ") + which + " input", i);
}

bool layer_is_linear(const LinkerConfig& c, std::size_t layer) {
  return c.linear_output && layer + 1 == c.n_transform_layers;
}

void run_branch(const Branch& branch, const LinkerConfig& config, const Matrix& x,
                Matrix& projected, Matrix& transformed, BranchCache& cache) {
  cache.input = x;
  kernels::gemm_nn(x, branch.projection.weight, cache.projection_raw);
  add_bias(cache.projection_raw, branch.projection.bias);
  projected = cache.projection_raw;
  cache.projection_norms = l2_normalize_rows(projected);

  cache.pre_activations.assign(branch.transform.size(), Matrix());
  cache.activations.assign(branch.transform.size(), Matrix());
  const Matrix* input = &cache.projection_raw;
  for (std::size_t l = 0; l < branch.transform.size(); ++l) {
    Matrix& z = cache.pre_activations[l];
    kernels::gemm_nn(*input, branch.transform[l].weight, z);
    add_bias(z, branch.transform[l].bias);
    Matrix& a = cache.activations[l];
    a = z;
    if (!layer_is_linear(config, l))
      for (double& v : a.values()) v = activate(v, config.activation);
    input = &a;
  }
  transformed = *input;
  cache.transform_norms = l2_normalize_rows(transformed);
}

// Gradient through y = h / ||h|| for every row.
Matrix normalize_backward(const Matrix& y, const std::vector<double>& norms, const Matrix& g) {
  Matrix dh(y.rows(), y.cols());
  if (g.empty()) return dh;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const double proj = dot(y.row(r), g.row(r));
    for (std::size_t c = 0; c < y.cols(); ++c)
      dh(r, c) = (g(r, c) - y(r, c) * proj) / norms[r];
  }
  return dh;
}

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> s(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) s[c] += m(r, c);
  return s;
}

void branch_backward(const Branch& branch, const LinkerConfig& config, const BranchCache& cache,
                     const Matrix& projected, const Matrix& transformed, const Matrix& g_p,
                     const Matrix& g_t, Branch& grad) {
  Matrix g_a = normalize_backward(transformed, cache.transform_norms, g_t);
  for (std::size_t l = branch.transform.size(); l-- > 0;) {
    Matrix g_z = g_a;
    if (!layer_is_linear(config, l)) {
      const Matrix& z = cache.pre_activations[l];
      for (std::size_t i = 0; i < g_z.size(); ++i)
        g_z.values()[i] *= activate_grad(z.values()[i], config.activation);
    }
    const Matrix& layer_input = l == 0 ? cache.projection_raw : cache.activations[l - 1];
    kernels::gemm_tn(layer_input, g_z, grad.transform[l].weight);
    grad.transform[l].bias = column_sums(g_z);
    kernels::gemm_nt(g_z, branch.transform[l].weight, g_a);
  }
  const Matrix g_proj_norm = normalize_backward(projected, cache.projection_norms, g_p);
  for (std::size_t i = 0; i < g_a.size(); ++i) g_a.values()[i] += g_proj_norm.values()[i];
  kernels::gemm_tn(cache.input, g_a, grad.projection.weight);
  grad.projection.bias = column_sums(g_a);
}

}  // namespace

ForwardOutput forward(const LinkerParams& params, const LinkerConfig& config,
                      const Matrix& speaker_rows, const Matrix& text_rows) {
  check_input(speaker_rows, config.dim_speaker_in, "speaker");
  check_input(text_rows, config.dim_text_in, "text");
  ForwardOutput out;
  run_branch(params.speaker, config, speaker_rows, out.x_s_p, out.x_s_t, out.speaker_cache);
  run_branch(params.text, config, text_rows, out.x_t_p, out.x_t_t, out.text_cache);
  return out;
}

Matrix project(const LinkerParams& params, const LinkerConfig& config, Modality modality,
               const Matrix& rows) {
  const bool speaker = modality == Modality::kSpeaker;
  check_input(rows, speaker ? config.dim_speaker_in : config.dim_text_in,
              speaker ? "speaker" : "text");
  const DenseLayer& layer = speaker ? params.speaker.projection : params.text.projection;
  Matrix out;
  kernels::gemm_nn(rows, layer.weight, out);
  add_bias(out, layer.bias);
  l2_normalize_rows(out);
  return out;
}

LinkerParams backward(const LinkerParams& params, const LinkerConfig& config,
                      const ForwardOutput& fwd, const OutputGrads& grads) {
  LinkerParams g = zeros_like(params);
  branch_backward(params.speaker, config, fwd.speaker_cache, fwd.x_s_p, fwd.x_s_t, grads.s_p,
                  grads.s_t, g.speaker);
  branch_backward(params.text, config, fwd.text_cache, fwd.x_t_p, fwd.x_t_t, grads.t_p,
                  grads.t_t, g.text);
  return g;
}

namespace {
constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint16_t kCheckpointVersion = 2;
}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  nlohmann::json header;
  header["format"] = "xmodal-checkpoint";
  header["config"] = ckpt.config;
  header["metadata"] = ckpt.metadata;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  detail::put<std::uint16_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto tensors = ckpt.params.tensors();
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols));
    detail::put<std::uint64_t>(out, t.rows);
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!out) throw Error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw InputError("not a checkpoint file: " + path.string());
  const auto version = detail::get<std::uint16_t>(in, "checkpoint header");
  if (version != kCheckpointVersion)
    throw InputError("checkpoint version mismatch: expected " +
                     std::to_string(kCheckpointVersion) + ", found " + std::to_string(version));
  const auto json_len = detail::get<std::uint32_t>(in, "checkpoint header");
  if (json_len > detail::remaining_bytes(in)) throw InputError("corrupt checkpoint header");
  std::string text(json_len, '\0');
  in.read(text.data(), json_len);

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.config = header.at("config").get<LinkerConfig>();
    ckpt.metadata = header.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("corrupt checkpoint header: ") + e.what());
  }
  ckpt.config.validate();
  ckpt.params = zero_params(ckpt.config);

  auto expected = ckpt.params.tensors();
  const auto count = detail::get<std::uint32_t>(in, "checkpoint tensor table");
  if (count != expected.size()) throw InputError("corrupt checkpoint: tensor count mismatch");
  for (auto& t : expected) {
    const auto name_len = detail::get<std::uint16_t>(in, "checkpoint tensor");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw InputError("truncated checkpoint");
    const auto cols = detail::get<std::uint32_t>(in, "checkpoint tensor");
    const auto rows = detail::get<std::uint64_t>(in, "checkpoint tensor");
    if (name != t.name || cols != t.cols || rows != t.rows)
      throw InputError("corrupt checkpoint: unexpected tensor '" + name + "'");
    if (!in.read(reinterpret_cast<char*>(t.values.data()),
                 static_cast<std::streamsize>(t.values.size() * sizeof(double))))
      throw InputError("truncated checkpoint payload");
    for (std::size_t i = 0; i < t.values.size(); ++i)
      if (!std::isfinite(t.values[i])) throw NonFiniteError("non-finite checkpoint value in " + name, i);
  }
  if (detail::remaining_bytes(in) != 0) throw InputError("corrupt checkpoint: trailing bytes");
  return ckpt;
}

}  // namespace xmodal
