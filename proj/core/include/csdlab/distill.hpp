#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csdlab/schedule.hpp"
#include "csdlab/types.hpp"
#include "csdlab/world.hpp"

namespace csdlab {

enum class RuleKind { SDS, CSD, CSD_NEG, CSD_EDIT, VSD, DDS, DDS_NO_CLS, CSD_ONLY_FROM_DDS };

std::string_view to_string(RuleKind kind);
RuleKind rule_kind_from_string(std::string_view name);

/// Whether the rule needs a second label (negative, edit or DDS source prompt).
bool needs_neg_prompt(RuleKind kind);
bool is_dds_family(RuleKind kind);

/// Per-timestep weighting w(t) applied to the whole rule output.
enum class TimeWeighting { One, SigmaSq };

std::string_view to_string(TimeWeighting w);
TimeWeighting time_weighting_from_string(std::string_view name);
double time_weight(TimeWeighting w, NoiseLevel lvl);

/// Scalar weight as a function of optimization progress u in [0, 1].
struct WeightSchedule {
  enum class Kind { Constant, LinearDecay, CosineDecay };

  Kind kind = Kind::Constant;
  double start = 0.5;
  double end = 0.5;

  static WeightSchedule constant(double value) { return {Kind::Constant, value, value}; }
  static WeightSchedule linear(double start, double end) { return {Kind::LinearDecay, start, end}; }
  static WeightSchedule cosine(double start, double end) { return {Kind::CosineDecay, start, end}; }

  /// value(0) = start, value(1) = end, monotone in between. u is clamped to [0, 1].
  double at(double u) const;
};

std::string_view to_string(WeightSchedule::Kind kind);
WeightSchedule::Kind weight_schedule_kind_from_string(std::string_view name);

struct RuleConfig {
  RuleKind kind = RuleKind::SDS;
  double omega = 40.0;
  double omega1 = 1.0;
  WeightSchedule omega2 = WeightSchedule::constant(0.5);
  std::string prompt;
  std::optional<std::string> neg_prompt;
  TimeWeighting w_of_t = TimeWeighting::One;

  /// Static consistency checks against a world; throws ConfigError / LookupError.
  void validate(const World& world) const;
};

// Fixed component names used in rule outputs and logs.
inline constexpr std::string_view kDeltaGen = "delta_gen";
inline constexpr std::string_view kDeltaClsPos = "delta_cls_pos";
inline constexpr std::string_view kDeltaClsNeg = "delta_cls_neg";
inline constexpr std::string_view kDeltaVsdResidual = "delta_vsd_residual";
inline constexpr std::string_view kDdsRefTerm = "dds_ref_term";

/// One additive term of a rule: total = sum of coefficient * value.
/// The coefficient already includes w(t).
struct RuleTerm {
  std::string_view name;
  double coefficient;
  Vec value;
};

struct RuleOutput {
  Vec total;
  std::vector<RuleTerm> terms;

  /// nullptr if the rule has no such term.
  const RuleTerm* find(std::string_view name) const;
};

/// Sum of coefficient * value over terms, in order. rule_delta produces its
/// total with exactly this routine.
Vec sum_terms(const std::vector<RuleTerm>& terms, Eigen::Index dim);

/// Noise predictor fitted to the current renders (the VSD phi* model).
class SurrogateModel {
 public:
  virtual ~SurrogateModel() = default;
  virtual Vec eps(const DiffusionSchedule& s, const Vec& x_t, std::string_view y, double t) const = 0;
};

/// Moment-matched Gaussian per prompt. Its noise predictor is the exact
/// minimizer of the denoising objective when the data model is that Gaussian:
/// -sigma_t * score of N(alpha_t mean, alpha_t^2 var + sigma_t^2) at x_t.
class VsdSurrogate final : public SurrogateModel {
 public:
  struct Settings {
    std::size_t fit_window = 64;
    std::size_t refresh_every = 10;
    double variance_floor = 1e-4;
  };

  struct GaussianFit {
    Vec mean;
    Vec var;
  };

  VsdSurrogate() = default;
  explicit VsdSurrogate(Settings settings);

  const Settings& settings() const { return settings_; }

  /// Refit the Gaussian for `label` from renders (sample mean, floored sample variance).
  /// Throws StateError on an empty window.
  void fit(std::string_view label, std::span<const Vec> renders);

  bool has_fit(std::string_view label) const;
  const GaussianFit& fit_for(std::string_view label) const;

  Vec eps(const DiffusionSchedule& s, const Vec& x_t, std::string_view y, double t) const override;

 private:
  Settings settings_{};
  std::map<std::string, GaussianFit, std::less<>> fits_;
};

/// Frozen reference render and its prompt for delta denoising score.
struct DdsReference {
  Vec x_hat;
  std::string y_hat;
};

struct RuleState {
  const World& world;
  const DiffusionSchedule& schedule;
  const Vec& x_t;
  double t;
  const Vec& eps;
  double progress = 0.0;                      // u in [0, 1], drives omega2
  const SurrogateModel* surrogate = nullptr;  // VSD
  const DdsReference* dds_ref = nullptr;      // DDS family
};

/// eps_pred(x_t; y, t) - eps.
Vec delta_gen(const World& w, const DiffusionSchedule& s, const Vec& x_t, std::string_view y,
              double t, const Vec& eps);

/// eps_pred(x_t; y, t) - eps_pred(x_t; t): the implicit classifier score.
Vec delta_cls(const World& w, const DiffusionSchedule& s, const Vec& x_t, std::string_view y,
              double t);

/// Image-space gradient for one step of the configured rule, with its named terms.
RuleOutput rule_delta(const RuleConfig& rule, const RuleState& state);

}  // namespace csdlab
