#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csdlab/distill.hpp"
#include "csdlab/generator.hpp"
#include "csdlab/optimizer.hpp"
#include "csdlab/schedule.hpp"
#include "csdlab/world.hpp"

namespace csdlab {

/// How the generator parameters are initialized.
struct ThetaInit {
  enum class Kind { Zeros, UncondMean, SampleFrom, Explicit };

  Kind kind = Kind::Zeros;
  std::string label;  // SampleFrom
  Vec values;         // Explicit

  static ThetaInit zeros() { return {}; }
  static ThetaInit uncond_mean() { return {Kind::UncondMean, {}, {}}; }
  static ThetaInit sample_from(std::string label) { return {Kind::SampleFrom, std::move(label), {}}; }
  static ThetaInit explicit_values(Vec v) { return {Kind::Explicit, {}, std::move(v)}; }
};

struct RunConfig {
  World world;
  DiffusionSchedule schedule;
  Generator generator;
  RuleConfig rule;
  std::int64_t steps = 2000;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  std::int64_t log_every = 1;
  ThetaInit theta_init;
  /// Timestep for logged classifier probabilities; defaults to schedule.t_min().
  std::optional<double> t_eval;
  VsdSurrogate::Settings vsd;

  /// Static checks (dimensions, labels, positivity). Throws ConfigError / LookupError.
  void validate() const;

  double eval_time() const { return t_eval.value_or(schedule.t_min()); }

  /// Resolved initial parameters. sample_from draws from a stream derived
  /// from the seed, independent of the optimization stream.
  Vec initial_theta() const;
};

/// One logged optimization step; absent norms are rule terms the rule does not have.
struct TrajectoryRow {
  std::int64_t step = 0;
  double t = 0.0;
  std::size_t camera = 0;
  std::optional<double> norm_delta_gen;
  std::optional<double> norm_delta_cls_pos;
  std::optional<double> norm_delta_cls_neg;
  double norm_total = 0.0;
  double clf_logprob = 0.0;  // log q(y | render) at t_eval, after the update
  std::optional<double> omega2;
  Vec theta;  // after the update
};

struct TrajectoryLog {
  std::vector<TrajectoryRow> rows;

  /// CSV with header step,t,camera,norm_delta_gen,norm_delta_cls_pos,
  /// norm_delta_cls_neg,norm_total,clf_logprob,omega2,theta_0..theta_{p-1}.
  /// Doubles are written in shortest round-trip form; absent values are empty.
  std::string to_csv(Eigen::Index param_dim) const;
};

struct PromptProb {
  std::string label;
  double prob;
};

struct RunResult {
  Vec final_theta;
  std::vector<Vec> final_renders;     // one per camera
  std::vector<PromptProb> clf_probs;  // q(y | render) at t_eval, averaged over cameras
  TrajectoryLog trajectory;
  double wall_time_ms = 0.0;

  double prob_of(std::string_view label) const;
};

/// Invoked after every step with the rule output used for the update.
using StepObserver = std::function<void(std::int64_t step, const RuleOutput& out)>;

/// Optimization loop. Each step draws t, then eps, then a camera from the
/// seeded stream, evaluates the rule on the noised render, pulls the result
/// back through the camera and applies the optimizer. Throws DivergedError
/// if theta becomes non-finite.
RunResult run(const RunConfig& config, const StepObserver& observer = {});

/// Classifier probabilities of a parameter vector, averaged over cameras.
std::vector<PromptProb> classifier_probs_of(const RunConfig& config, const Vec& theta);

struct GradNormTable {
  std::vector<std::int64_t> step;
  std::vector<double> norm_gen;
  std::vector<double> norm_cls;
  std::vector<double> running_mean_gen;
  std::vector<double> running_mean_cls;
  /// mean norm_gen / mean norm_cls; +inf when the classifier term is identically zero.
  double ratio = 0.0;
  bool ratio_infinite = false;
  RunResult run;

  std::string to_csv() const;
};

/// Runs SDS and tabulates raw per-step norms of the generative and classifier terms.
GradNormTable gradient_norm_experiment(const RunConfig& config);

/// One run per omega with identical seeds; results in input order.
std::vector<RunResult> omega_sweep(const RunConfig& base, std::span<const double> omegas);

struct AnnealComparison {
  RunResult fixed;
  RunResult annealed;
};

/// CSD_NEG with omega2 held at its start value vs linearly decayed to 0.
AnnealComparison anneal_comparison(const RunConfig& base);

struct EditResult {
  RunResult run;
  std::vector<PromptProb> before;  // source, target, edit
  std::vector<PromptProb> after;
};

/// Continues from the source parameters under CSD_EDIT(target, edit) with
/// omega1 = w1 and constant omega2 = w2.
EditResult edit_experiment(const RunConfig& source, const std::string& target,
                           const std::string& edit, double w1, double w2);

RunConfig make_edit_config(const RunConfig& source, const std::string& target,
                           const std::string& edit, double w1, double w2);

}  // namespace csdlab
