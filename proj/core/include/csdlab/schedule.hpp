#pragma once

#include <string_view>

#include "csdlab/rng.hpp"
#include "csdlab/types.hpp"

namespace csdlab {

enum class ScheduleKind {
  LinearSigma,  // sigma_t = t, alpha_t = sqrt(1 - t^2)
  CosineAlpha,  // alpha_t = cos(pi t / 2), sigma_t = sin(pi t / 2)
};

std::string_view to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(std::string_view name);

struct NoiseLevel {
  double alpha;
  double sigma;
};

/// Variance-preserving forward process on continuous time t in [0, 1].
///
/// Training-time timesteps are drawn from [t_min, t_max]; the defaults keep
/// sigma away from 0 (where the 1/sigma score factor blows up) and alpha away
/// from 0 (where the signal vanishes).
class DiffusionSchedule {
 public:
  static constexpr double kDefaultTMin = 0.02;
  static constexpr double kDefaultTMax = 0.98;

  explicit DiffusionSchedule(ScheduleKind kind = ScheduleKind::LinearSigma,
                             double t_min = kDefaultTMin,
                             double t_max = kDefaultTMax);

  ScheduleKind kind() const { return kind_; }
  double t_min() const { return t_min_; }
  double t_max() const { return t_max_; }

  /// (alpha_t, sigma_t); throws DomainError outside [0, 1].
  NoiseLevel at(double t) const;

  /// alpha_t * x + sigma_t * eps.
  Vec perturb(const Vec& x, double t, const Vec& eps) const;

  /// Uniform draw on [t_min, t_max].
  double sample_timestep(Rng& rng) const;

 private:
  ScheduleKind kind_;
  double t_min_;
  double t_max_;
};

}  // namespace csdlab
