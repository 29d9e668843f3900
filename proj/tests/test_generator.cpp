#include <doctest.h>

#include "csdlab/errors.hpp"
#include "csdlab/generator.hpp"
#include "csdlab/rng.hpp"

using namespace csdlab;

namespace {

Generator random_affine(Rng& rng, Eigen::Index d, Eigen::Index p, std::size_t k) {
  std::vector<Camera> cams;
  for (std::size_t i = 0; i < k; ++i) {
    Mat m(d, p);
    for (Eigen::Index c = 0; c < p; ++c) m.col(c) = rng.normal_vec(d);
    cams.push_back({m, rng.normal_vec(d)});
  }
  return Generator::affine(std::move(cams));
}

}  // namespace

TEST_CASE("render: examples") {
  const Generator id = Generator::identity(2);
  const Vec theta = (Vec(2) << 1.0, 2.0).finished();
  CHECK(id.render(theta, 0) == theta);

  const Generator trivial = Generator::affine({{Mat::Identity(2, 2), Vec::Zero(2)}});
  CHECK(trivial.render(theta, 0) == id.render(theta, 0));

  Mat m(2, 2);
  m << 2, 0, 0, 0.5;
  const Generator g = Generator::affine({{m, (Vec(2) << 1.0, 0.0).finished()}});
  const Vec out = g.render((Vec(2) << 3.0, 4.0).finished(), 0);
  CHECK(out[0] == 7.0);
  CHECK(out[1] == 2.0);

  CHECK_THROWS_AS(g.render(theta, 1), LookupError);
  CHECK_THROWS_AS(g.render(Vec::Zero(3), 0), DomainError);
}

TEST_CASE("pullback: examples") {
  const Generator id = Generator::identity(3);
  const Vec d = (Vec(3) << 0.1, -2.0, 5.0).finished();
  CHECK(id.pullback(0, d) == d);

  Mat m(2, 2);
  m << 2, 0, 0, 0.5;
  const Generator g = Generator::affine({{m, Vec::Zero(2)}});
  const Vec out = g.pullback(0, Vec::Ones(2));
  CHECK(out[0] == 2.0);
  CHECK(out[1] == 0.5);
  CHECK_THROWS_AS(g.pullback(0, Vec::Ones(3)), DomainError);
  CHECK_THROWS_AS(g.pullback(4, Vec::Ones(2)), LookupError);
}

TEST_CASE("pullback matches directional finite differences of render") {
  Rng rng(17);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const Generator g = random_affine(rng, 3, 4, 2);
    const Vec theta = rng.normal_vec(4);
    const Vec v = rng.normal_vec(4);
    const Vec delta = rng.normal_vec(3);
    for (std::size_t c = 0; c < g.camera_count(); ++c) {
      const double fd = (g.render(theta + h * v, c) - g.render(theta, c)).dot(delta) / h;
      const double exact = v.dot(g.pullback(c, delta));
      CHECK(std::abs(fd - exact) <= 1e-5 * std::max(std::abs(exact), 1.0));
    }
  }
}

TEST_CASE("adjoint identity and affinity hold for every camera") {
  Rng rng(23);
  const Generator g = random_affine(rng, 2, 5, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec u = rng.normal_vec(5);
    const Vec v = rng.normal_vec(2);
    const Vec t1 = rng.normal_vec(5), t2 = rng.normal_vec(5);
    for (std::size_t c = 0; c < g.camera_count(); ++c) {
      const double lhs = (g.cameras()[c].matrix * u).dot(v);
      CHECK(std::abs(lhs - u.dot(g.pullback(c, v))) < 1e-12);
      const Vec a = g.render(t1 + t2, c) - g.render(t2, c);
      const Vec b = g.render(t1, c) - g.render(Vec::Zero(5), c);
      CHECK((a - b).norm() < 1e-12);
    }
  }
}

TEST_CASE("random-orthonormal preset is seeded and orthonormal") {
  const Generator a = Generator::random_orthonormal(3, 4, 9);
  const Generator b = Generator::random_orthonormal(3, 4, 9);
  REQUIRE(a.camera_count() == 4);
  for (std::size_t c = 0; c < 4; ++c) {
    const Mat& q = a.cameras()[c].matrix;
    CHECK((q.transpose() * q - Mat::Identity(3, 3)).norm() < 1e-12);
    CHECK(q == b.cameras()[c].matrix);
  }
}

TEST_CASE("affine construction rejects inconsistent cameras") {
  CHECK_THROWS_AS(Generator::affine({}), ConfigError);
  CHECK_THROWS_AS(Generator::affine({{Mat::Identity(2, 2), Vec::Zero(2)}, {Mat::Identity(2, 3), Vec::Zero(2)}}),
                  ConfigError);
  CHECK_THROWS_AS(Generator::affine({{Mat::Identity(2, 2), Vec::Zero(3)}}), ConfigError);
}

TEST_CASE("preimage inverts an invertible camera") {
  Mat m(2, 2);
  m << 2, 1, 0, 3;
  const Generator g = Generator::affine({{m, (Vec(2) << 1.0, -1.0).finished()}});
  const Vec target = (Vec(2) << 0.3, 0.7).finished();
  CHECK((g.render(g.preimage(target), 0) - target).norm() < 1e-12);
}
