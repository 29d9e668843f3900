#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "csdlab/schedule.hpp"
#include "csdlab/types.hpp"

namespace csdlab {

/// Diagonal-covariance Gaussian. Variances are per dimension, in data units squared.
struct GaussianComponent {
  Vec mean;
  Vec var;
};

/// Finite Gaussian mixture with diagonal components sharing one dimension.
class Mixture {
 public:
  /// Validates: at least one component, shared dimension, positive variances,
  /// nonnegative weights summing to 1 within 1e-12.
  Mixture(std::vector<GaussianComponent> components, std::vector<double> weights);

  Eigen::Index dim() const { return components_.front().mean.size(); }
  std::size_t size() const { return components_.size(); }
  const std::vector<GaussianComponent>& components() const { return components_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Weighted mean of the mixture.
  Vec mean() const;

  /// Draw one sample.
  Vec sample(Rng& rng) const;

 private:
  std::vector<GaussianComponent> components_;
  std::vector<double> weights_;
};

/// Forward-diffused marginal: means alpha_t * mu_k, variances alpha_t^2 var_k + sigma_t^2.
Mixture diffused_mixture(const Mixture& m, const DiffusionSchedule& s, double t);

/// log sum_k w_k N(x; mu_k, diag(var_k)), log-sum-exp stabilized.
double log_density(const Mixture& m, const Vec& x);

/// grad_x log density = sum_k r_k(x) * (-(x - mu_k) / var_k).
Vec score(const Mixture& m, const Vec& x);

/// Prompt label, or nullopt for the unconditional (pooled) model.
using Condition = std::optional<std::string_view>;
inline constexpr Condition kUnconditional = std::nullopt;

/// Prompt-indexed Gaussian-mixture world. Every quantity a trained
/// text-conditioned diffusion model would approximate is exact here:
/// the unconditional model is the prior-weighted pool of all class mixtures,
/// so conditional and unconditional noise predictors are mutually consistent.
class World {
 public:
  struct Prompt {
    std::string label;
    Mixture mixture;
  };

  /// Empty prior means uniform.
  World(std::vector<Prompt> prompts, std::vector<double> prior = {});

  Eigen::Index dim() const { return dim_; }
  std::size_t prompt_count() const { return prompts_.size(); }
  const std::vector<Prompt>& prompts() const { return prompts_; }
  const std::vector<double>& prior() const { return prior_; }
  const Mixture& pooled() const { return pooled_; }

  /// Index of a label; throws LookupError if unknown.
  std::size_t index_of(std::string_view label) const;
  bool has_prompt(std::string_view label) const;

  /// Class mixture for a label, or the pooled mixture for kUnconditional.
  const Mixture& mixture(Condition y) const;

  /// Exact noise predictor: -sigma_t * score of the diffused (class or pooled) density.
  /// Requires sigma_t > 0.
  Vec eps_pred(const DiffusionSchedule& s, const Vec& x_t, Condition y, double t) const;

  /// log q_t(x_t | y) or log q_t(x_t) under the diffused mixture.
  double diffused_log_density(const DiffusionSchedule& s, const Vec& x_t, Condition y,
                              double t) const;

  /// Implicit classifier log q(y | x_t) = log prior(y) + log q_t(x_t|y) - log q_t(x_t).
  double classifier_logprob(const DiffusionSchedule& s, const Vec& x_t, double t,
                            std::string_view y) const;

  /// q(y | x_t) for every prompt, in prompt order. Sums to 1.
  std::vector<double> classifier_probs(const DiffusionSchedule& s, const Vec& x_t,
                                       double t) const;

 private:
  std::vector<Prompt> prompts_;
  std::vector<double> prior_;
  Mixture pooled_;
  Eigen::Index dim_;
};

}  // namespace csdlab
