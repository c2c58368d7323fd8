#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cpba/geometry.hpp"

namespace cpba {

/// Triangulated points and lines of one potential planar region.
struct PlanarCandidateSet {
  int region_id = 0;
  std::vector<int> point_ids;
  std::vector<Vec3> points;
  std::vector<int> line_ids;
  std::vector<std::array<Vec3, 2>> lines;  // endpoints

  std::size_t size() const { return points.size() + lines.size(); }
};

struct RansacConfig {
  double inlier_distance = 0.05;    // m
  double consensus_fraction = 0.8;  // theta_cp
  int max_iterations = 200;
  int min_features = 10;
  std::uint64_t rng_seed = 0;

  /// Throws kInvalidInput on out-of-range values.
  void validate() const;
};

struct PlaneAssociation {
  Plane plane;
  std::vector<int> point_ids;  // sorted
  std::vector<int> line_ids;   // sorted

  std::size_t size() const { return point_ids.size() + line_ids.size(); }
};

double feature_plane_distance(const Vec3& point, const Plane& plane);
/// Lines count by their worse endpoint.
double feature_plane_distance(const std::array<Vec3, 2>& endpoints, const Plane& plane);

/// Total least squares plane through at least three points. The sign is
/// canonical: offset <= 0, or the first non-zero normal component positive
/// when the plane passes through the origin.
/// Throws kInvalidInput for fewer than three points or collinear input.
Plane fit_plane_least_squares(std::span<const Vec3> points);

Plane canonical_plane(const Plane& plane);

/// Seeded RANSAC over 3-point samples drawn from points and line endpoints.
/// The winning hypothesis is refit over its inliers and the inlier set is
/// recomputed against the refit plane. Returns nothing when that consensus
/// is below consensus_fraction of the candidates or no sample was usable.
std::optional<PlaneAssociation> fit_plane_ransac(const PlanarCandidateSet& candidates,
                                                 const RansacConfig& cfg);

/// Adds every new feature within inlier_distance of the associated plane.
PlaneAssociation associate_new_landmarks(PlaneAssociation assoc, const PlanarCandidateSet& features,
                                         double inlier_distance);

bool gate_region(const PlanarCandidateSet& candidates, int min_features);

}  // namespace cpba
