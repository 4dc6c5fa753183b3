// include/xmodal/cli.hpp

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
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmodal/linker_model.hpp"
#include "xmodal/metrics.hpp"
#include "xmodal/trainer.hpp"

namespace xmodal::cli {

// Settings shared by the file-configurable commands. A JSON config file
// fills these first; command-line flags then override individual fields.
struct RunConfig {
  std::optional<std::string> data;  // training dataset directory
  std::optional<std::string> eval;  // evaluation dataset directory
  std::optional<std::string> out;
  std::optional<std::string> ckpt;
  nlohmann::json linker = nlohmann::json::object();  // applied over data-derived dims
  TrainConfig train;
  bool seed_given = false;
  EvalOptions evaluation;
  std::size_t checkpoint_every = 0;
  std::size_t lda_dim = 0;  // 0 = largest rank both modalities support
  double lda_shrinkage = 0.1;
};

// Unknown keys, at any level, throw InputError.
RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json(const nlohmann::json& j);

// Flag value, then config value, then XMODAL_SEED, then 0.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::optional<std::uint64_t> config);

// Runs one subcommand; `args` excludes the program name. Exit codes: 0 on
// success, 1 on a compute failure, 2 on a usage or input error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xmodal::cli
