#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "csdlab/types.hpp"

namespace csdlab {

/// Fixed affine view: render = matrix * theta + offset (d x p matrix, d-vector offset).
struct Camera {
  Mat matrix;
  Vec offset;
};

enum class GeneratorKind { Identity, AffineMultiView };

/// Differentiable renderer g(theta; c). Only affine maps are supported, so the
/// chain rule through the renderer is an exact transposed-matrix product.
class Generator {
 public:
  /// Single implicit identity camera; p == d.
  static Generator identity(Eigen::Index dim);

  /// One or more affine cameras sharing (d, p).
  static Generator affine(std::vector<Camera> cameras);

  /// k cameras, each a seeded random d x d orthonormal matrix with zero offset.
  static Generator random_orthonormal(Eigen::Index dim, std::size_t k, std::uint64_t seed);

  GeneratorKind kind() const { return kind_; }
  Eigen::Index image_dim() const { return image_dim_; }
  Eigen::Index param_dim() const { return param_dim_; }
  std::size_t camera_count() const { return kind_ == GeneratorKind::Identity ? 1 : cameras_.size(); }
  const std::vector<Camera>& cameras() const { return cameras_; }

  Vec render(const Vec& theta, std::size_t camera) const;

  /// (d render / d theta)^T * delta_x for the given camera.
  Vec pullback(std::size_t camera, const Vec& delta_x) const;

  /// Least-squares preimage of a target render under one camera.
  Vec preimage(const Vec& target, std::size_t camera = 0) const;

 private:
  Generator(GeneratorKind kind, std::vector<Camera> cameras, Eigen::Index d, Eigen::Index p)
      : kind_(kind), cameras_(std::move(cameras)), image_dim_(d), param_dim_(p) {}

  void check_camera(std::size_t camera) const;

  GeneratorKind kind_;
  std::vector<Camera> cameras_;
  Eigen::Index image_dim_;
  Eigen::Index param_dim_;
};

}  // namespace csdlab
