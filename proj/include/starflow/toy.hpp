#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "starflow/ellipsoid.hpp"
#include "starflow/star_model.hpp"

namespace starflow {

/// Four-armed planar star: one branch per axis direction +-e1, +-e2.
std::shared_ptr<StarRadial> toy_cross_radial();

/// Two opposite branches along +-e1.
std::shared_ptr<StarRadial> toy_two_branch_radial();

/// Identity base map, the four-armed radial and nu(s) = log(10 s + 1).
std::shared_ptr<StarModel> toy_star_model();

/// Columns scale * rho(u_j) u_j for the four arm directions of a planar model.
Mat toy_archetypes(const StarModel& model, double scale = 2.0);

struct CrossSpec {
  int per_arm = 500;
  double arm_length = 3.0;
  double noise = 0.1;
  std::uint64_t seed = 7;
};

/// Rows t u_j + noise with t uniform on [0, arm_length]; labels hold the arm index j.
Mat cross_data(const CrossSpec& spec, std::vector<int>* arms = nullptr);

/// n x dim points drawn uniformly from the triangle spanned by the columns of `vertices`.
Mat triangle_hull_data(const Mat& vertices, int n, std::uint64_t seed);

}  // namespace starflow
