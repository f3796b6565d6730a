#pragma once

#include <Eigen/Core>

namespace saelab {

// Working precision is double; files store f32 and are widened on read.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace saelab
