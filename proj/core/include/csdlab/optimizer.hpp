#pragma once

#include <string_view>

#include "csdlab/types.hpp"

namespace csdlab {

enum class OptimizerKind { GD, Adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;

  void validate() const;
};

/// Stateful first-order optimizer over one parameter vector.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, Eigen::Index dim);

  /// theta <- theta - update(grad).
  void step(Vec& theta, const Vec& grad);

  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  Vec m_;
  Vec v_;
  long long t_ = 0;
};

}  // namespace csdlab
