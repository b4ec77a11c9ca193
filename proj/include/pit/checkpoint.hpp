// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container:
//
//   "PITCKPT1"  u32 version  u64 header_bytes  header (JSON)
//   u64 tensor_count
//   per tensor: u32 name_bytes  name  i64 rows  i64 cols  rows*cols f64
//
// The JSON header carries the run configuration, training progress and
// scoring calibration; every floating-point quantity that must survive
// bit-exactly (parameters, optimizer moments, standardizer) is a tensor.
#pragma once

#include "pit/run_config.hpp"
#include "pit/scoring.hpp"
#include "pit/training.hpp"

#include <filesystem>
#include <optional>

namespace pit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct SavedRun {
  Checkpoint checkpoint;
  RunConfig config;
  std::optional<Calibration> calibration;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint,
                     const RunConfig& config, const Calibration* calibration = nullptr);

// Throws ParseError on a malformed or truncated file and DimensionError when
// a stored tensor does not match the configured model.
SavedRun load_checkpoint(const std::filesystem::path& path);

}  // namespace pit
