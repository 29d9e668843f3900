#include "csdlab/generator.hpp"

#include <string>

#include "csdlab/errors.hpp"
#include "csdlab/rng.hpp"

namespace csdlab {

Generator Generator::identity(Eigen::Index dim) {
  if (dim <= 0) throw ConfigError("identity generator needs positive dimension");
  return Generator(GeneratorKind::Identity, {}, dim, dim);
}

Generator Generator::affine(std::vector<Camera> cameras) {
  if (cameras.empty()) throw ConfigError("affine generator needs at least one camera");
  const Eigen::Index d = cameras.front().matrix.rows();
  const Eigen::Index p = cameras.front().matrix.cols();
  if (d == 0 || p == 0) throw ConfigError("camera matrices must be nonempty");
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const auto& c = cameras[i];
    if (c.matrix.rows() != d || c.matrix.cols() != p) {
      throw ConfigError("camera " + std::to_string(i) + " matrix is " +
                        std::to_string(c.matrix.rows()) + "x" + std::to_string(c.matrix.cols()) +
                        ", expected " + std::to_string(d) + "x" + std::to_string(p));
    }
    if (c.offset.size() != d) {
      throw ConfigError("camera " + std::to_string(i) + " offset has dimension " +
                        std::to_string(c.offset.size()) + ", expected " + std::to_string(d));
    }
    if (!c.matrix.allFinite() || !c.offset.allFinite()) {
      throw ConfigError("camera " + std::to_string(i) + " has non-finite entries");
    }
  }
  return Generator(GeneratorKind::AffineMultiView, std::move(cameras), d, p);
}

Generator Generator::random_orthonormal(Eigen::Index dim, std::size_t k, std::uint64_t seed) {
  if (dim <= 0 || k == 0) throw ConfigError("random-orthonormal preset needs dim > 0 and k > 0");
  Rng rng(seed);
  std::vector<Camera> cams;
  cams.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    Mat gauss(dim, dim);
    for (Eigen::Index c = 0; c < dim; ++c) gauss.col(c) = rng.normal_vec(dim);
    Eigen::HouseholderQR<Mat> qr(gauss);
    Mat q = qr.householderQ() * Mat::Identity(dim, dim);
    cams.push_back({std::move(q), Vec::Zero(dim)});
  }
  return affine(std::move(cams));
}

void Generator::check_camera(std::size_t camera) const {
  if (camera >= camera_count()) {
    throw LookupError("camera index " + std::to_string(camera) + " out of range (" +
                      std::to_string(camera_count()) + " cameras)");
  }
}

Vec Generator::render(const Vec& theta, std::size_t camera) const {
  check_camera(camera);
  if (theta.size() != param_dim_) {
    throw DomainError("render: theta has dimension " + std::to_string(theta.size()) +
                      ", expected " + std::to_string(param_dim_));
  }
  if (kind_ == GeneratorKind::Identity) return theta;
  const auto& c = cameras_[camera];
  return c.matrix * theta + c.offset;
}

Vec Generator::pullback(std::size_t camera, const Vec& delta_x) const {
  check_camera(camera);
  if (delta_x.size() != image_dim_) {
    throw DomainError("pullback: delta has dimension " + std::to_string(delta_x.size()) +
                      ", expected " + std::to_string(image_dim_));
  }
  if (kind_ == GeneratorKind::Identity) return delta_x;
  return cameras_[camera].matrix.transpose() * delta_x;
}

Vec Generator::preimage(const Vec& target, std::size_t camera) const {
  check_camera(camera);
  if (target.size() != image_dim_) {
    throw DomainError("preimage: target has dimension " + std::to_string(target.size()) +
                      ", expected " + std::to_string(image_dim_));
  }
  if (kind_ == GeneratorKind::Identity) return target;
  const auto& c = cameras_[camera];
  return c.matrix.completeOrthogonalDecomposition().solve(target - c.offset);
}

}  // namespace csdlab
