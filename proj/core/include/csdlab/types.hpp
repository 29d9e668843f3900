#pragma once

#include <Eigen/Dense>

namespace csdlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace csdlab
