#pragma once

#include <vector>

#include "cpba/geometry.hpp"
#include "cpba/parametrizations.hpp"

namespace cpba {

/// Current values of every variable in a bundle-adjustment problem.
struct State {
  std::vector<Pose> poses;
  std::vector<LandmarkParam> landmarks;
  std::vector<Plane> planes;
};

enum class BlockType { kPose, kLandmark, kPlane };

struct BlockRef {
  BlockType type = BlockType::kPose;
  int index = 0;

  friend bool operator==(const BlockRef&, const BlockRef&) = default;
};

int block_tangent_dim(const BlockRef& ref, const State& state);

}  // namespace cpba
