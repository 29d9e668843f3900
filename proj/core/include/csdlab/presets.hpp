#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "csdlab/world.hpp"

namespace csdlab {

struct PresetInfo {
  std::string name;
  std::string description;
};

// Built-in worlds:
//   two-mode-1d     A: N(-2, 0.25), B: N(2, 0.25); uniform prior.
//   three-class-1d  y: N(2, 0.1), y_neg: N(2.8, 0.1), other: N(-2, 0.1); uniform prior.
//   grid-2d         3x3 grid of N(., 0.1 I) at {-2, 0, 2}^2; classes are the columns
//                   left (x=-2), middle (x=0), right (x=2), three equal-weight
//                   components each; uniform prior.
std::vector<PresetInfo> world_presets();

/// Throws ConfigError for an unknown name.
World make_world_preset(std::string_view name);

}  // namespace csdlab
