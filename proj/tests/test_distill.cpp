#include <doctest.h>

#include <cmath>

#include "csdlab/distill.hpp"
#include "csdlab/errors.hpp"
#include "csdlab/generator.hpp"
#include "csdlab/presets.hpp"

using namespace csdlab;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

// Surrogate that returns the world's unconditional predictor.
class UncondSurrogate final : public SurrogateModel {
 public:
  explicit UncondSurrogate(const World& w) : world_(w) {}
  Vec eps(const DiffusionSchedule& s, const Vec& x_t, std::string_view, double t) const override {
    return world_.eps_pred(s, x_t, kUnconditional, t);
  }

 private:
  const World& world_;
};

RuleConfig rule(RuleKind kind, std::string prompt, std::optional<std::string> neg = std::nullopt) {
  RuleConfig r;
  r.kind = kind;
  r.prompt = std::move(prompt);
  r.neg_prompt = std::move(neg);
  return r;
}

}  // namespace

TEST_CASE("delta_gen: examples") {
  const World unit({{"only", Mixture({{Vec::Zero(1), Vec::Ones(1)}}, {1.0})}});
  const DiffusionSchedule s;
  // eps_pred = sigma x for a unit Gaussian.
  CHECK(delta_gen(unit, s, v1(1.0), "only", 0.6, v1(0.6))[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(delta_gen(unit, s, v1(1.0), "only", 0.6, v1(0.0))[0] == doctest::Approx(0.6).epsilon(1e-15));

  const World w = make_world_preset("two-mode-1d");
  CHECK(delta_gen(w, s, v1(0.5), "B", 0.6, v1(0.25))[0] ==
        doctest::Approx(-1.269230769230769 - 0.25).epsilon(1e-13));
  CHECK_THROWS_AS(delta_gen(w, s, v1(0.5), "B", 0.6, Vec::Zero(2)), DomainError);
}

TEST_CASE("delta_gen has zero mean when x_t is built from data of the same prompt") {
  const World w = make_world_preset("grid-2d");
  const DiffusionSchedule s;
  Rng rng(101);
  constexpr int n = 40000;
  for (const double t : {0.2, 0.5, 0.9}) {
    Vec sum = Vec::Zero(2), sum_sq = Vec::Zero(2);
    for (int i = 0; i < n; ++i) {
      const Vec x0 = w.mixture("middle").sample(rng);
      const Vec e = rng.normal_vec(2);
      const Vec d = delta_gen(w, s, s.perturb(x0, t, e), "middle", t, e);
      sum += d;
      sum_sq += d.cwiseAbs2();
    }
    const Vec mean = sum / n;
    const Vec se = ((sum_sq / n - mean.cwiseAbs2()) / n).cwiseSqrt();
    for (Eigen::Index i = 0; i < 2; ++i) CHECK(std::abs(mean[i]) < 3.0 * se[i] + 1e-12);
  }
}

TEST_CASE("delta_cls: examples") {
  const DiffusionSchedule s;
  const World single({{"only", make_world_preset("two-mode-1d").pooled()}});
  CHECK(delta_cls(single, s, v1(0.3), "only", 0.4).norm() == 0.0);

  const World w = make_world_preset("two-mode-1d");
  const double d = delta_cls(w, s, v1(0.5), "B", 0.6)[0];
  CHECK(d < 0.0);
  CHECK(d == doctest::Approx(-1.269230769230769 + 1.106513517317042).epsilon(1e-12));

  // -sigma * d/dx log p(B | x_t)
  const double h = 1e-5;
  const double fd = (w.classifier_logprob(s, v1(0.5 + h), 0.6, "B") -
                     w.classifier_logprob(s, v1(0.5 - h), 0.6, "B")) / (2 * h);
  CHECK(d == doctest::Approx(-0.6 * fd).epsilon(1e-7));
}

TEST_CASE("delta_cls is antisymmetric under the two-mode reflection") {
  const DiffusionSchedule s;
  const World w = make_world_preset("two-mode-1d");
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const double t = s.sample_timestep(rng);
    const double x = 3.0 * rng.normal();
    const double b = delta_cls(w, s, v1(x), "B", t)[0];
    const double a = delta_cls(w, s, v1(-x), "A", t)[0];
    CHECK(std::abs(a + b) <= 1e-12 * std::max(1.0, std::abs(b)));
  }
}

TEST_CASE("rule_delta: SDS with omega 0 equals delta_gen") {
  const World w = make_world_preset("two-mode-1d");
  const DiffusionSchedule s;
  RuleConfig r = rule(RuleKind::SDS, "B");
  r.omega = 0.0;
  const Vec x = v1(0.5), e = v1(-0.3);
  const RuleOutput out = rule_delta(r, {w, s, x, 0.6, e});
  CHECK(out.total == delta_gen(w, s, x, "B", 0.6, e));
}

TEST_CASE("rule_delta: total is the sum of its terms for every rule") {
  const World w = make_world_preset("three-class-1d");
  const DiffusionSchedule s;
  const UncondSurrogate sur(w);
  const DdsReference ref{v1(-2.0), "other"};
  Rng rng(55);
  for (auto kind : {RuleKind::SDS, RuleKind::CSD, RuleKind::CSD_NEG, RuleKind::CSD_EDIT, RuleKind::VSD,
                    RuleKind::DDS, RuleKind::DDS_NO_CLS, RuleKind::CSD_ONLY_FROM_DDS}) {
    RuleConfig r = rule(kind, "y", needs_neg_prompt(kind) ? std::optional<std::string>("y_neg") : std::nullopt);
    r.omega2 = WeightSchedule::linear(1.0, 0.0);
    r.w_of_t = TimeWeighting::SigmaSq;
    for (int i = 0; i < 10; ++i) {
      const double t = s.sample_timestep(rng);
      const Vec x = v1(2.0 * rng.normal()), e = v1(rng.normal());
      const RuleOutput out = rule_delta(r, {w, s, x, t, e, rng.uniform(), &sur, &ref});
      CHECK(out.total == sum_terms(out.terms, 1));
    }
  }
}

TEST_CASE("rule_delta: SDS splits into generative and classifier terms") {
  const World w = make_world_preset("grid-2d");
  const DiffusionSchedule s;
  Rng rng(8);
  RuleConfig r = rule(RuleKind::SDS, "left");
  r.omega = 7.5;
  for (int i = 0; i < 20; ++i) {
    const double t = s.sample_timestep(rng);
    const Vec x = 2.0 * rng.normal_vec(2), e = rng.normal_vec(2);
    const RuleOutput out = rule_delta(r, {w, s, x, t, e});
    const Vec expect = delta_gen(w, s, x, "left", t, e) + 7.5 * delta_cls(w, s, x, "left", t);
    CHECK((out.total - expect).norm() <= 1e-12 * std::max(1.0, expect.norm()));
    REQUIRE(out.find(kDeltaGen) != nullptr);
    CHECK(out.find(kDeltaClsPos)->coefficient == 7.5);
  }
}

TEST_CASE("rule_delta: CSD_NEG examples") {
  const World w = make_world_preset("three-class-1d");
  const DiffusionSchedule s;
  const Vec x = v1(1.0), e = v1(0.0);
  RuleConfig r = rule(RuleKind::CSD_NEG, "y", "y_neg");
  r.omega1 = 1.0;
  r.omega2 = WeightSchedule::constant(0.0);
  CHECK(rule_delta(r, {w, s, x, 0.5, e}).total == rule_delta(rule(RuleKind::CSD, "y"), {w, s, x, 0.5, e}).total);

  r.omega2 = WeightSchedule::constant(1.0);
  const Vec expect = w.eps_pred(s, x, "y", 0.5) - w.eps_pred(s, x, "y_neg", 0.5);
  CHECK((rule_delta(r, {w, s, x, 0.5, e}).total - expect).norm() < 1e-12);

  r.omega2 = WeightSchedule::linear(1.0, 0.0);
  CHECK(rule_delta(r, {w, s, x, 0.5, e, 1.0}).total == rule_delta(rule(RuleKind::CSD, "y"), {w, s, x, 0.5, e}).total);
}

TEST_CASE("rule_delta: VSD with the unconditional oracle as surrogate") {
  const World w = make_world_preset("two-mode-1d");
  const DiffusionSchedule s;
  const UncondSurrogate sur(w);
  RuleConfig r = rule(RuleKind::VSD, "A");
  r.omega = 3.0;
  Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    const double t = s.sample_timestep(rng);
    const Vec x = v1(2.0 * rng.normal()), e = v1(rng.normal());
    const Vec expect = 4.0 * delta_cls(w, s, x, "A", t);
    CHECK((rule_delta(r, {w, s, x, t, e, 0.0, &sur}).total - expect).norm() <= 1e-12 * std::max(1.0, expect.norm()));
  }
  CHECK_THROWS_AS(rule_delta(r, {w, s, v1(0.0), 0.5, v1(0.0)}), ConfigError);
}

TEST_CASE("rule_delta: DDS family") {
  const World w = make_world_preset("two-mode-1d");
  const DiffusionSchedule s;
  RuleConfig r = rule(RuleKind::DDS, "B", "A");
  r.omega = 5.0;
  const Vec x = v1(0.7), e = v1(-1.1);
  const double t = 0.45;
  CHECK_THROWS_AS(rule_delta(r, {w, s, x, t, e}), ConfigError);

  // Reference equal to the optimized state cancels everything.
  const auto [alpha, sigma] = s.at(t);
  const DdsReference same{(x - sigma * e) / alpha, "B"};
  CHECK(rule_delta(r, {w, s, x, t, e, 0.0, nullptr, &same}).total.norm() < 1e-12);

  const DdsReference ref{v1(-2.0), "A"};
  const RuleOutput out = rule_delta(r, {w, s, x, t, e, 0.0, nullptr, &ref});
  RuleConfig sds = rule(RuleKind::SDS, "A");
  sds.omega = 5.0;
  const Vec ref_t = s.perturb(ref.x_hat, t, e);
  const Vec expect = delta_gen(w, s, x, "B", t, e) + 5.0 * delta_cls(w, s, x, "B", t) -
                     rule_delta(sds, {w, s, ref_t, t, e}).total;
  CHECK((out.total - expect).norm() < 1e-12);
  CHECK(out.find(kDdsRefTerm)->coefficient == -1.0);

  RuleConfig no_cls = r;
  no_cls.kind = RuleKind::DDS_NO_CLS;
  const RuleOutput nc = rule_delta(no_cls, {w, s, x, t, e, 0.0, nullptr, &ref});
  CHECK(nc.find(kDeltaClsPos) == nullptr);
  CHECK((nc.total + 5.0 * delta_cls(w, s, x, "B", t) - out.total).norm() < 1e-12);

  RuleConfig only = r;
  only.kind = RuleKind::CSD_ONLY_FROM_DDS;
  CHECK((rule_delta(only, {w, s, x, t, e, 0.0, nullptr, &ref}).total - 5.0 * delta_cls(w, s, x, "B", t)).norm() <
        1e-15);
}

TEST_CASE("rule_delta: sigma-squared weighting scales the total") {
  const World w = make_world_preset("two-mode-1d");
  const DiffusionSchedule s;
  RuleConfig r = rule(RuleKind::SDS, "B");
  const Vec x = v1(0.2), e = v1(0.4);
  const Vec one = rule_delta(r, {w, s, x, 0.5, e}).total;
  r.w_of_t = TimeWeighting::SigmaSq;
  CHECK((rule_delta(r, {w, s, x, 0.5, e}).total - 0.25 * one).norm() < 1e-12);
}

TEST_CASE("rule_delta: errors") {
  const World w = make_world_preset("two-mode-1d");
  const DiffusionSchedule s;
  CHECK_THROWS_AS(rule_delta(rule(RuleKind::CSD_NEG, "B"), {w, s, v1(0.0), 0.5, v1(0.0)}), ConfigError);
  CHECK_THROWS_AS(rule_delta(rule(RuleKind::CSD, "B"), {w, s, Vec::Zero(2), 0.5, Vec::Zero(2)}), DomainError);
  CHECK_THROWS_AS(rule_delta(rule(RuleKind::CSD, "Q"), {w, s, v1(0.0), 0.5, v1(0.0)}), LookupError);
}

TEST_CASE("RuleConfig::validate") {
  const World w = make_world_preset("two-mode-1d");
  CHECK_NOTHROW(rule(RuleKind::CSD, "A").validate(w));
  CHECK_THROWS_AS(rule(RuleKind::CSD_NEG, "A").validate(w), ConfigError);
  CHECK_THROWS_AS(rule(RuleKind::CSD, "A", "B").validate(w), ConfigError);
  CHECK_THROWS_AS(rule(RuleKind::CSD, "").validate(w), ConfigError);
  CHECK_THROWS_AS(rule(RuleKind::DDS, "A", "nope").validate(w), LookupError);
  RuleConfig r = rule(RuleKind::SDS, "A");
  r.omega = -1.0;
  CHECK_THROWS_AS(r.validate(w), ConfigError);
  CHECK(rule_kind_from_string("csd_only_from_dds") == RuleKind::CSD_ONLY_FROM_DDS);
  CHECK_THROWS_AS(rule_kind_from_string("xyz"), ConfigError);
}

TEST_CASE("VsdSurrogate::fit: examples") {
  const DiffusionSchedule s;
  VsdSurrogate sur;
  const std::vector<Vec> constant(5, v1(1.5));
  sur.fit("A", constant);
  CHECK(sur.fit_for("A").mean[0] == 1.5);
  CHECK(sur.fit_for("A").var[0] == 1e-4);

  Rng rng(31);
  std::vector<Vec> samples;
  for (int i = 0; i < 10000; ++i) samples.push_back(v1(3.0 + std::sqrt(0.5) * rng.normal()));
  sur.fit("B", samples);
  CHECK(std::abs(sur.fit_for("B").mean[0] - 3.0) < 0.03);
  CHECK(std::abs(sur.fit_for("B").var[0] - 0.5) < 0.03);

  const double t = 0.3;
  const Vec at_mean = s.at(t).alpha * sur.fit_for("B").mean;
  CHECK(sur.eps(s, at_mean, "B", t).norm() < 1e-15);

  CHECK_THROWS_AS(sur.fit("C", std::span<const Vec>{}), StateError);
  CHECK_THROWS_AS(sur.eps(s, v1(0.0), "C", t), StateError);
  CHECK(!sur.has_fit("C"));
}

TEST_CASE("WeightSchedule endpoints and monotonicity") {
  for (auto sched : {WeightSchedule::linear(1.0, 0.0), WeightSchedule::cosine(1.0, 0.0),
                     WeightSchedule::linear(0.2, 0.9), WeightSchedule::cosine(0.2, 0.9)}) {
    CHECK(sched.at(0.0) == sched.start);
    CHECK(sched.at(1.0) == sched.end);
    const double sign = sched.end >= sched.start ? 1.0 : -1.0;
    double prev = sched.at(0.0);
    for (int i = 1; i <= 200; ++i) {
      const double v = sched.at(i / 200.0);
      CHECK(sign * (v - prev) >= -1e-15);
      prev = v;
    }
  }
  CHECK(WeightSchedule::constant(0.7).at(0.3) == 0.7);
  CHECK(WeightSchedule::linear(1.0, 0.0).at(2.0) == 0.0);
}

TEST_CASE("pulled-back noise has zero mean") {
  const Generator g = Generator::random_orthonormal(2, 3, 4);
  REQUIRE(g.image_dim() == 2);
  Rng rng(202);
  constexpr int n = 50000;
  Vec sum = Vec::Zero(2), sum_sq = Vec::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Vec e = rng.normal_vec(2);
    const Vec p = g.pullback(rng.index(g.camera_count()), -e);
    sum += p;
    sum_sq += p.cwiseAbs2();
  }
  const Vec mean = sum / n;
  const Vec se = ((sum_sq / n - mean.cwiseAbs2()) / n).cwiseSqrt();
  for (Eigen::Index i = 0; i < 2; ++i) CHECK(std::abs(mean[i]) < 3.0 * se[i]);
}

TEST_CASE("delta_gen averaged over noise at fixed x_t recovers eps_pred") {
  const World w = make_world_preset("two-mode-1d");
  const DiffusionSchedule s;
  const Vec x = v1(0.5);
  const double target = w.eps_pred(s, x, "B", 0.6)[0];
  Rng rng(303);
  constexpr int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = delta_gen(w, s, x, "B", 0.6, v1(rng.normal()))[0];
    sum += d;
    sum_sq += d * d;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  CHECK(std::abs(mean - target) < 3.0 * se);
}

TEST_CASE("CSD update at the midpoint moves toward the target mode") {
  const World w = make_world_preset("two-mode-1d");
  const DiffusionSchedule s;
  for (const double t : {0.1, 0.5, 0.9}) {
    const Vec d = delta_cls(w, s, v1(0.0), "B", t);
    CHECK(d[0] < 0.0);
    const double stepped = 0.0 - 0.01 * d[0];
    CHECK(std::abs(stepped - 2.0) < 2.0);
  }
}

TEST_CASE("CSD_NEG equals the expanded three-predictor form") {
  const World w = make_world_preset("three-class-1d");
  const DiffusionSchedule s;
  Rng rng(91);
  for (int i = 0; i < 50; ++i) {
    RuleConfig r = rule(RuleKind::CSD_NEG, "y", "y_neg");
    r.omega1 = 5.0 * rng.uniform();
    r.omega2 = WeightSchedule::constant(5.0 * rng.uniform());
    const double t = s.sample_timestep(rng);
    const Vec x = v1(3.0 * rng.normal()), e = v1(rng.normal());
    const double w1 = r.omega1, w2 = r.omega2.start;
    const Vec expect = w1 * w.eps_pred(s, x, "y", t) + (w2 - w1) * w.eps_pred(s, x, kUnconditional, t) -
                       w2 * w.eps_pred(s, x, "y_neg", t);
    CHECK((rule_delta(r, {w, s, x, t, e}).total - expect).norm() < 1e-12);
  }
}

TEST_CASE("VSD rearranges for an arbitrary surrogate") {
  const World w = make_world_preset("grid-2d");
  const DiffusionSchedule s;
  VsdSurrogate sur;
  Rng rng(92);
  std::vector<Vec> renders;
  for (int i = 0; i < 20; ++i) renders.push_back(rng.normal_vec(2));
  sur.fit("left", renders);
  RuleConfig r = rule(RuleKind::VSD, "left");
  r.omega = 7.5;
  for (int i = 0; i < 50; ++i) {
    const double t = s.sample_timestep(rng);
    const Vec x = 2.0 * rng.normal_vec(2), e = rng.normal_vec(2);
    const Vec expect = 8.5 * delta_cls(w, s, x, "left", t) -
                       (sur.eps(s, x, "left", t) - w.eps_pred(s, x, kUnconditional, t));
    CHECK((rule_delta(r, {w, s, x, t, e, 0.0, &sur}).total - expect).norm() < 1e-12);
  }
}
