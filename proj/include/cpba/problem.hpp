#pragma once

#include <vector>

#include "cpba/residuals.hpp"
#include "cpba/state.hpp"

namespace cpba {

/// Variable graph of a bundle-adjustment problem. Variable values live in a
/// separate State; pose_fixed is indexed like State::poses.
struct Problem {
  CameraIntrinsics camera;
  std::vector<bool> pose_fixed;
  std::vector<ResidualEdge> edges;
  RobustLoss loss;  // point and line reprojection edges only
};

/// Checks that every edge references existing blocks of the right kind, that
/// information matrices are valid and that at least one pose is fixed.
void validate_problem(const Problem& problem, const State& state);

/// Free variable blocks in solver order: poses, then landmarks with a
/// non-zero tangent dimension, then planes.
struct BlockLayout {
  std::vector<BlockRef> blocks;
  std::vector<int> offsets;
  std::vector<int> dims;
  std::vector<int> pose_slot;      // -1 when the pose is fixed
  std::vector<int> landmark_slot;  // -1 for zero-dimensional landmarks
  std::vector<int> plane_slot;
  int num_pose_blocks = 0;
  int pose_dim = 0;
  int total_dim = 0;

  int slot(const BlockRef& ref) const;
};

BlockLayout make_layout(const Problem& problem, const State& state);

}  // namespace cpba
