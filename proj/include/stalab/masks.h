// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include "stalab/vitcore.h"

namespace sta {

/// Writes one binary PGM (P5, maxval 255) per stage and frame,
/// stage<k>_frame<t>.pgm, with surviving grid cells white and dropped cells
/// black (each cell cell_px square), plus masks.json holding every stage's
/// kept indices and surviving grid positions. Returns the written paths.
std::vector<std::filesystem::path> export_masks(
    const PruneTrace& trace, std::size_t grid_rows, std::size_t grid_cols,
    const std::filesystem::path& out_dir, int cell_px = 8);

}  // namespace sta
