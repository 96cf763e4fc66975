#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace mohone {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;
using NodeId = std::uint32_t;

/// Row-major dense matrix; embedding rows are contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace mohone
