#include "csdlab/optimizer.hpp"

#include <cmath>
#include <string>

#include "csdlab/errors.hpp"

namespace csdlab {

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::GD ? "gd" : "adam";
}

OptimizerKind optimizer_kind_from_string(std::string_view name) {
  if (name == "gd") return OptimizerKind::GD;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected gd or adam)");
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be > 0");
  if (kind == OptimizerKind::Adam) {
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("adam eps must be > 0");
  }
}

Optimizer::Optimizer(OptimizerConfig config, Eigen::Index dim)
    : config_(config), m_(Vec::Zero(dim)), v_(Vec::Zero(dim)) {}

void Optimizer::step(Vec& theta, const Vec& grad) {
  if (config_.kind == OptimizerKind::GD) {
    theta -= config_.lr * grad;
    return;
  }
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    theta[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
  }
}

}  // namespace csdlab
