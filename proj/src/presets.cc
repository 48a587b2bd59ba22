// SPDX-License-Identifier: Apache-2.0
#include "stalab/presets.h"

#include <charconv>
#include <string>

#include "stalab/error.h"

namespace sta {
namespace {

ModelConfig full_scale(int depth, int dim, int heads) {
  ModelConfig c;
  c.frames = 16;
  c.height = 224;
  c.width = 224;
  c.tube_frames = 2;
  c.tube_height = 16;
  c.tube_width = 16;
  c.depth = depth;
  c.dim = dim;
  c.heads = heads;
  c.classes = 400;
  return c;
}

}  // namespace

ModelConfig model_preset(std::string_view name) {
  if (name == "vit-s") return full_scale(12, 384, 6);
  if (name == "vit-b") return full_scale(12, 768, 12);
  if (name == "vit-l") return full_scale(24, 1024, 16);
  if (name == "vit-h") return full_scale(32, 1280, 16);
  if (name == "toy") return ModelConfig{};
  if (name == "tiny") {
    ModelConfig c;
    c.frames = 4;
    c.height = 16;
    c.width = 16;
    c.depth = 2;
    c.dim = 8;
    c.heads = 2;
    c.classes = 3;
    return c;
  }
  throw ConfigError("unknown model preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() {
  return {"toy", "tiny", "vit-s", "vit-b", "vit-l", "vit-h"};
}

ModelConfig parse_model(std::string_view spec) {
  if (spec.find('=') == std::string_view::npos) return model_preset(spec);
  ModelConfig c;
  while (!spec.empty()) {
    const auto comma = spec.find(',');
    const std::string_view item = spec.substr(0, comma);
    spec = comma == std::string_view::npos ? std::string_view{}
                                           : spec.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("model override '" + std::string(item) +
                        "' is not key=value");
    }
    const std::string_view key = item.substr(0, eq);
    const std::string_view val = item.substr(eq + 1);
    int v = 0;
    auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
    if (ec != std::errc{} || ptr != val.data() + val.size()) {
      throw ConfigError("model override '" + std::string(item) +
                        "' has a non-integer value");
    }
    if (key == "T") c.frames = v;
    else if (key == "H") c.height = v;
    else if (key == "W") c.width = v;
    else if (key == "t") c.tube_frames = v;
    else if (key == "h") c.tube_height = v;
    else if (key == "w") c.tube_width = v;
    else if (key == "L") c.depth = v;
    else if (key == "d") c.dim = v;
    else if (key == "heads") c.heads = v;
    else if (key == "classes") c.classes = v;
    else throw ConfigError("unknown model key '" + std::string(key) + "'");
  }
  c.validate();
  return c;
}

}  // namespace sta
