// SPDX-License-Identifier: Apache-2.0
#include "stalab/masks.h"

#include <string>
#include <system_error>

#include <json.hpp>

#include "stalab/error.h"
#include "stalab/tensor_io.h"

namespace sta {

std::vector<std::filesystem::path> export_masks(
    const PruneTrace& trace, std::size_t grid_rows, std::size_t grid_cols,
    const std::filesystem::path& out_dir, int cell_px) {
  if (cell_px <= 0) throw ConfigError("cell size must be positive");
  const std::size_t spatial = grid_rows * grid_cols;
  if (!trace.stages.empty() && trace.stages.front().spatial_before != spatial) {
    throw ShapeError("mask grid " + std::to_string(grid_rows) + "x" +
                     std::to_string(grid_cols) + " does not hold " +
                     std::to_string(trace.stages.front().spatial_before) +
                     " tokens");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create mask directory " + out_dir.string());
  }

  const auto positions = surviving_positions(trace, spatial);
  const std::size_t px = static_cast<std::size_t>(cell_px);
  const std::size_t img_w = grid_cols * px;
  const std::size_t img_h = grid_rows * px;
  std::vector<std::filesystem::path> written;
  nlohmann::json doc;
  doc["grid"] = {{"rows", grid_rows}, {"cols", grid_cols}};
  doc["stages"] = nlohmann::json::array();

  for (std::size_t k = 0; k < trace.stages.size(); ++k) {
    const SelectionTrace& st = trace.stages[k];
    for (std::size_t t = 0; t < positions[k].size(); ++t) {
      std::vector<bool> alive(spatial, false);
      for (std::size_t p : positions[k][t]) alive[p] = true;
      const std::string header = "P5\n" + std::to_string(img_w) + " " +
                                 std::to_string(img_h) + "\n255\n";
      std::vector<std::uint8_t> bytes(header.begin(), header.end());
      for (std::size_t y = 0; y < img_h; ++y) {
        for (std::size_t x = 0; x < img_w; ++x) {
          const std::size_t cell = (y / px) * grid_cols + x / px;
          bytes.push_back(alive[cell] ? 255 : 0);
        }
      }
      const auto path = out_dir / ("stage" + std::to_string(st.stage) +
                                   "_frame" + std::to_string(t) + ".pgm");
      write_file_atomic(path, bytes);
      written.push_back(path);
    }
    doc["stages"].push_back({{"stage", st.stage},
                             {"block", st.block},
                             {"drop", st.drop},
                             {"order", std::string(to_string(st.order))},
                             {"kept_indices", st.kept_indices},
                             {"kept_positions", positions[k]}});
  }
  const auto json_path = out_dir / "masks.json";
  write_file_atomic(json_path, doc.dump(2) + "\n");
  written.push_back(json_path);
  return written;
}

}  // namespace sta
