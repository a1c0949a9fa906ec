// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "retain/model.hpp"

namespace retain {

inline constexpr int kCheckpointFormatVersion = 1;

/// Single JSON document: format_version, model_kind, dims, task, timestamped,
/// output, the remaining model config, and params as name -> nested arrays
/// (row-major). Doubles are written in shortest round-trip form.
std::string checkpoint_to_json(const SequenceModel& model);
std::unique_ptr<SequenceModel> checkpoint_from_json(const std::string& text);

void save_checkpoint(const SequenceModel& model, const std::filesystem::path& path);
std::unique_ptr<SequenceModel> load_checkpoint(const std::filesystem::path& path);

/// Fixed key order used for the model config inside checkpoints and manifests.
std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace retain
