// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "treenmt/adadelta.hpp"
#include "treenmt/model.hpp"

namespace treenmt {

inline constexpr std::string_view kCheckpointMagic = "treenmt-ckpt-1";

enum class StorageType : std::uint8_t { F64 = 0, F32 = 1 };

/// Layout: the magic line, a u64 entry count, then per entry a u32 name
/// length, the name, a u8 dtype (0 f64, 1 f32, 2 utf8 text), u64 rows,
/// u64 cols and the little-endian payload. `meta.config` and
/// `meta.progress` are text entries; optimizer accumulators are stored as
/// `opt.eg2/<name>` and `opt.edx2/<name>`.
struct Checkpoint {
  Model model;
  std::optional<OptState> opt;
  std::string progress;  // free-form key=value text
};

void save_checkpoint(const std::string& path, const Model& model, const OptState* opt,
                     const std::string& progress = {}, StorageType storage = StorageType::F64);

/// Throws VersionMismatch, CorruptCheckpoint, MissingParameter, IoError.
Checkpoint load_checkpoint(const std::string& path);

/// Copies parameters from a checkpoint into an existing layout. Throws
/// MissingParameter or ShapeMismatch when the layouts differ.
void load_parameters_into(Model& model, const std::string& path);

}  // namespace treenmt
