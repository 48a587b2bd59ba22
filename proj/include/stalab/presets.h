// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "stalab/vitcore.h"

namespace sta {

// vit-s, vit-b, vit-l, vit-h: 16x224x224 input, 2x16x16 tubes, 400 classes.
// toy: 8x64x64 input, 2x8x8 tubes, 6 blocks of width 64.
// tiny: 4x16x16 input, 2x8x8 tubes, 2 blocks of width 8 (finite differences).
ModelConfig model_preset(std::string_view name);
std::vector<std::string> preset_names();

// Either a preset name or a comma-separated override list on top of the toy
// preset, e.g. "L=4,d=32,heads=2". Keys: T H W t h w L d heads classes.
ModelConfig parse_model(std::string_view spec);

}  // namespace sta
