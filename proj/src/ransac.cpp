#include "cpba/ransac.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "cpba/error.hpp"

namespace cpba {

void RansacConfig::validate() const {
  if (!(inlier_distance > 0.0)) throw Error(ErrorCode::kInvalidInput, "inlier_distance must be positive");
  if (!(consensus_fraction > 0.0 && consensus_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidInput, "consensus_fraction must lie in (0, 1]");
  }
  if (max_iterations < 1) throw Error(ErrorCode::kInvalidInput, "max_iterations must be positive");
  if (min_features < 0) throw Error(ErrorCode::kInvalidInput, "min_features must be non-negative");
}

double feature_plane_distance(const Vec3& point, const Plane& plane) {
  return std::abs(plane.signed_distance(point));
}

double feature_plane_distance(const std::array<Vec3, 2>& endpoints, const Plane& plane) {
  return std::max(feature_plane_distance(endpoints[0], plane), feature_plane_distance(endpoints[1], plane));
}

Plane canonical_plane(const Plane& plane) {
  Plane p = plane;
  bool flip = false;
  if (p.offset > 0.0) {
    flip = true;
  } else if (p.offset == 0.0) {
    for (int i = 0; i < 3; ++i) {
      if (p.normal[i] != 0.0) {
        flip = p.normal[i] < 0.0;
        break;
      }
    }
  }
  if (flip) {
    p.normal = -p.normal;
    p.offset = -p.offset;
  }
  return p;
}

Plane fit_plane_least_squares(std::span<const Vec3> points) {
  if (points.size() < 3) throw Error(ErrorCode::kInvalidInput, "plane fit needs at least three points");
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Mat3 scatter = Mat3::Zero();
  for (const auto& p : points) scatter += (p - centroid) * (p - centroid).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  const Vec3 ev = eig.eigenvalues();
  if (!(ev(1) > 1e-12 * std::max(ev(2), 1e-300))) {
    throw Error(ErrorCode::kInvalidInput, "points are collinear");
  }
  const Vec3 n = eig.eigenvectors().col(0).normalized();
  return canonical_plane(Plane{n, -n.dot(centroid)});
}

namespace {

struct Consensus {
  std::vector<int> points;  // indices into the candidate arrays
  std::vector<int> lines;
  std::size_t size() const { return points.size() + lines.size(); }
};

Consensus inliers_of(const PlanarCandidateSet& c, const Plane& plane, double threshold) {
  Consensus out;
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    if (feature_plane_distance(c.points[i], plane) < threshold) out.points.push_back(static_cast<int>(i));
  }
  for (std::size_t i = 0; i < c.lines.size(); ++i) {
    if (feature_plane_distance(c.lines[i], plane) < threshold) out.lines.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace

std::optional<PlaneAssociation> fit_plane_ransac(const PlanarCandidateSet& candidates, const RansacConfig& cfg) {
  cfg.validate();
  if (candidates.point_ids.size() != candidates.points.size() ||
      candidates.line_ids.size() != candidates.lines.size()) {
    throw Error(ErrorCode::kInvalidInput, "candidate ids and positions differ in length");
  }
  std::vector<Vec3> pool = candidates.points;
  for (const auto& l : candidates.lines) {
    pool.push_back(l[0]);
    pool.push_back(l[1]);
  }
  for (const auto& p : pool) {
    if (!p.allFinite()) throw Error(ErrorCode::kInvalidInput, "candidate position is not finite");
  }
  if (pool.size() < 3) return std::nullopt;

  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);

  std::optional<Consensus> best;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    const std::size_t i = pick(rng), j = pick(rng), k = pick(rng);
    if (i == j || j == k || i == k) continue;
    const Vec3 n = (pool[j] - pool[i]).cross(pool[k] - pool[i]);
    const double scale = (pool[j] - pool[i]).norm() * (pool[k] - pool[i]).norm();
    if (!(n.norm() > 1e-9 * scale) || scale == 0.0) continue;
    const Vec3 unit = n.normalized();
    Consensus c = inliers_of(candidates, Plane{unit, -unit.dot(pool[i])}, cfg.inlier_distance);
    if (!best || c.size() > best->size()) best = std::move(c);
  }
  if (!best || best->size() == 0) return std::nullopt;

  std::vector<Vec3> support;
  for (int i : best->points) support.push_back(candidates.points[static_cast<std::size_t>(i)]);
  for (int i : best->lines) {
    support.push_back(candidates.lines[static_cast<std::size_t>(i)][0]);
    support.push_back(candidates.lines[static_cast<std::size_t>(i)][1]);
  }
  Plane plane;
  try {
    plane = fit_plane_least_squares(support);
  } catch (const Error&) {
    return std::nullopt;
  }
  const Consensus final_set = inliers_of(candidates, plane, cfg.inlier_distance);
  const double needed = cfg.consensus_fraction * static_cast<double>(candidates.size());
  if (static_cast<double>(final_set.size()) < needed - 1e-9) return std::nullopt;

  PlaneAssociation assoc;
  assoc.plane = plane;
  for (int i : final_set.points) assoc.point_ids.push_back(candidates.point_ids[static_cast<std::size_t>(i)]);
  for (int i : final_set.lines) assoc.line_ids.push_back(candidates.line_ids[static_cast<std::size_t>(i)]);
  std::sort(assoc.point_ids.begin(), assoc.point_ids.end());
  std::sort(assoc.line_ids.begin(), assoc.line_ids.end());
  return assoc;
}

PlaneAssociation associate_new_landmarks(PlaneAssociation assoc, const PlanarCandidateSet& features,
                                         double inlier_distance) {
  auto add = [](std::vector<int>& ids, int id) {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) ids.insert(it, id);
  };
  for (std::size_t i = 0; i < features.points.size(); ++i) {
    if (feature_plane_distance(features.points[i], assoc.plane) < inlier_distance) add(assoc.point_ids, features.point_ids[i]);
  }
  for (std::size_t i = 0; i < features.lines.size(); ++i) {
    if (feature_plane_distance(features.lines[i], assoc.plane) < inlier_distance) add(assoc.line_ids, features.line_ids[i]);
  }
  return assoc;
}

bool gate_region(const PlanarCandidateSet& candidates, int min_features) {
  return candidates.size() > 0 && static_cast<int>(candidates.size()) >= min_features;
}

}  // namespace cpba
