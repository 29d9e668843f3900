#include "csdlab/presets.hpp"

#include <string>

#include "csdlab/errors.hpp"

namespace csdlab {
namespace {

World::Prompt gaussian_1d(std::string label, double mean, double var) {
  return {std::move(label), Mixture({{Vec::Constant(1, mean), Vec::Constant(1, var)}}, {1.0})};
}

World grid_2d() {
  const double coords[] = {-2.0, 0.0, 2.0};
  const char* labels[] = {"left", "middle", "right"};
  std::vector<World::Prompt> prompts;
  for (int col = 0; col < 3; ++col) {
    std::vector<GaussianComponent> comps;
    for (double y : coords) {
      Vec mean(2);
      mean << coords[col], y;
      comps.push_back({mean, Vec::Constant(2, 0.1)});
    }
    prompts.push_back({labels[col], Mixture(std::move(comps), {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0})});
  }
  return World(std::move(prompts));
}

}  // namespace

std::vector<PresetInfo> world_presets() {
  return {
      {"two-mode-1d", "1D, classes A: N(-2, 0.25) and B: N(2, 0.25), uniform prior"},
      {"three-class-1d",
       "1D, classes y: N(2, 0.1), y_neg: N(2.8, 0.1), other: N(-2, 0.1), uniform prior"},
      {"grid-2d",
       "2D, 3x3 grid of N(., 0.1 I) at {-2,0,2}^2; classes left/middle/right are the grid "
       "columns, uniform prior"},
  };
}

World make_world_preset(std::string_view name) {
  if (name == "two-mode-1d") {
    return World({gaussian_1d("A", -2.0, 0.25), gaussian_1d("B", 2.0, 0.25)});
  }
  if (name == "three-class-1d") {
    return World({gaussian_1d("y", 2.0, 0.1), gaussian_1d("y_neg", 2.8, 0.1),
                  gaussian_1d("other", -2.0, 0.1)});
  }
  if (name == "grid-2d") return grid_2d();
  throw ConfigError("unknown world preset '" + std::string(name) + "'");
}

}  // namespace csdlab
