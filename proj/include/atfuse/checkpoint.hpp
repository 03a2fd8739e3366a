// Copyright 2026 The ATFuse Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>

#include "atfuse/model.hpp"

namespace atfuse {

// Checkpoint container, all integers little-endian u32:
//
//   "ATFUSE1"
//   config_len, config text (`model.key = value` lines)
//   blob_count
//   per blob: name_len, name, rank, dims[rank], float32 LE values
//
// Blobs are the model parameters followed by batch-norm running statistics.
void save_checkpoint(AtfuseModel& model, const std::filesystem::path& path);
AtfuseModel load_checkpoint(const std::filesystem::path& path);

// `<checkpoint stem>.cfg` next to the checkpoint.
std::filesystem::path config_sidecar_path(const std::filesystem::path& checkpoint);

// FNV-1a over the float32 bytes of every blob, for reproducibility checks.
std::uint64_t parameter_checksum(AtfuseModel& model);

}  // namespace atfuse
