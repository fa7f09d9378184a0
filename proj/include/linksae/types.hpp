#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace linksae {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexVector = Eigen::VectorXi;
using KeyMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Category codes are 1..k; MISSING sits outside that range.
inline constexpr int kMissing = 0;

inline bool is_missing(int code) { return code == kMissing; }

}  // namespace linksae
