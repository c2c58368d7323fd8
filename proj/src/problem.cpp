#include "cpba/problem.hpp"

#include <string>

namespace cpba {

namespace {

void require_index(int index, std::size_t size, const char* what) {
  if (index < 0 || static_cast<std::size_t>(index) >= size) {
    throw Error(ErrorCode::kInvalidInput, std::string("edge references missing ") + what + " " + std::to_string(index));
  }
}

}  // namespace

void validate_problem(const Problem& problem, const State& state) {
  problem.camera.validate();
  if (problem.pose_fixed.size() != state.poses.size()) {
    throw Error(ErrorCode::kInvalidInput, "pose_fixed does not match the number of poses");
  }
  bool any_fixed = false;
  for (bool f : problem.pose_fixed) any_fixed = any_fixed || f;
  if (!any_fixed) throw Error(ErrorCode::kInvalidInput, "at least one pose must be fixed to remove the gauge");

  for (const auto& lm : state.landmarks) {
    if (const auto* p = std::get_if<InverseDepthPoint>(&lm)) require_index(p->anchor_frame, state.poses.size(), "anchor pose");
    if (const auto* p = std::get_if<CoPlanarPoint>(&lm)) {
      require_index(p->anchor_frame, state.poses.size(), "anchor pose");
      require_index(p->plane_id, state.planes.size(), "plane");
    }
    if (const auto* p = std::get_if<CoPlanarLine>(&lm)) {
      require_index(p->anchor_frame, state.poses.size(), "anchor pose");
      require_index(p->plane_id, state.planes.size(), "plane");
    }
  }

  for (const auto& e : problem.edges) {
    validate_information(e);
    switch (e.kind) {
      case EdgeKind::kPointReproj:
      case EdgeKind::kLineReproj: {
        require_index(e.frame, state.poses.size(), "pose");
        require_index(e.landmark, state.landmarks.size(), "landmark");
        const bool line = is_line_landmark(state.landmarks[static_cast<std::size_t>(e.landmark)]);
        if (line != (e.kind == EdgeKind::kLineReproj)) {
          throw Error(ErrorCode::kInvalidInput, "reprojection edge kind does not match its landmark");
        }
        break;
      }
      case EdgeKind::kRelPoseOdometry:
        require_index(e.frame, state.poses.size(), "pose");
        require_index(e.frame_b, state.poses.size(), "pose");
        break;
      case EdgeKind::kPointOnPlane:
      case EdgeKind::kLineOnPlane:
        require_index(e.landmark, state.landmarks.size(), "landmark");
        require_index(e.plane, state.planes.size(), "plane");
        break;
    }
  }
}

int BlockLayout::slot(const BlockRef& ref) const {
  const auto idx = static_cast<std::size_t>(ref.index);
  switch (ref.type) {
    case BlockType::kPose: return pose_slot.at(idx);
    case BlockType::kLandmark: return landmark_slot.at(idx);
    case BlockType::kPlane: return plane_slot.at(idx);
  }
  return -1;
}

BlockLayout make_layout(const Problem& problem, const State& state) {
  BlockLayout layout;
  auto push = [&](const BlockRef& ref, int dim) {
    const int s = static_cast<int>(layout.blocks.size());
    layout.blocks.push_back(ref);
    layout.offsets.push_back(layout.total_dim);
    layout.dims.push_back(dim);
    layout.total_dim += dim;
    return s;
  };
  layout.pose_slot.assign(state.poses.size(), -1);
  for (std::size_t i = 0; i < state.poses.size(); ++i) {
    if (i < problem.pose_fixed.size() && problem.pose_fixed[i]) continue;
    layout.pose_slot[i] = push({BlockType::kPose, static_cast<int>(i)}, 6);
  }
  layout.num_pose_blocks = static_cast<int>(layout.blocks.size());
  layout.pose_dim = layout.total_dim;
  layout.landmark_slot.assign(state.landmarks.size(), -1);
  for (std::size_t i = 0; i < state.landmarks.size(); ++i) {
    const int dim = landmark_tangent_dim(state.landmarks[i]);
    if (dim == 0) continue;
    layout.landmark_slot[i] = push({BlockType::kLandmark, static_cast<int>(i)}, dim);
  }
  layout.plane_slot.assign(state.planes.size(), -1);
  for (std::size_t i = 0; i < state.planes.size(); ++i) {
    layout.plane_slot[i] = push({BlockType::kPlane, static_cast<int>(i)}, 3);
  }
  return layout;
}

}  // namespace cpba
