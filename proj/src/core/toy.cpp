#include "starflow/toy.hpp"

#include <random>

namespace starflow {

namespace {

using Vec2d = Eigen::Vector2d;

BranchRadial axis_branch(const Vec& u) {
  Mat frame(2, 2);
  frame.col(0) = u;
  frame.col(1) = Vec2d(-u[1], u[0]);
  Ellipsoid off(frame, Vec2d(4.0, 0.25), 1.5 * u);
  Ellipsoid centered(frame, Vec2d(9.0, 0.36), Vec::Zero(2));
  return BranchRadial(std::move(off), std::move(centered), 0.1);
}

std::vector<Vec> arm_directions() {
  return {Vec2d(1, 0), Vec2d(0, 1), Vec2d(-1, 0), Vec2d(0, -1)};
}

}  // namespace

std::shared_ptr<StarRadial> toy_cross_radial() {
  std::vector<BranchRadial> branches;
  for (const Vec& u : arm_directions()) branches.push_back(axis_branch(u));
  return std::make_shared<StarRadial>(std::move(branches), 0.1);
}

std::shared_ptr<StarRadial> toy_two_branch_radial() {
  std::vector<BranchRadial> branches{axis_branch(Vec2d(1, 0)), axis_branch(Vec2d(-1, 0))};
  return std::make_shared<StarRadial>(std::move(branches), 0.1);
}

std::shared_ptr<StarModel> toy_star_model() {
  return std::make_shared<StarModel>(std::make_shared<IdentityDiffeo>(2), toy_cross_radial(),
                                     std::make_shared<LogWarp>(10.0));
}

Mat toy_archetypes(const StarModel& model, double scale) {
  require_dim(model.dim(), 2, "toy_archetypes");
  const auto dirs = arm_directions();
  Mat z(2, 4);
  for (int j = 0; j < 4; ++j) {
    const Vec latent = scale * model.radial()->eval(dirs[j]) * dirs[j];
    z.col(j) = model.base()->inverse(latent);
  }
  return z;
}

Mat cross_data(const CrossSpec& spec, std::vector<int>* arms) {
  if (spec.per_arm < 1 || !(spec.arm_length > 0.0) || !(spec.noise >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "cross_data: bad specification");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> along(0.0, spec.arm_length);
  std::normal_distribution<double> noise(0.0, spec.noise);
  const auto dirs = arm_directions();
  Mat x(4 * spec.per_arm, 2);
  if (arms) arms->clear();
  for (int i = 0; i < 4 * spec.per_arm; ++i) {
    const int j = i % 4;
    const double t = along(rng);
    const double e0 = noise(rng);
    const double e1 = noise(rng);
    x.row(i) = (t * dirs[j] + Vec2d(e0, e1)).transpose();
    if (arms) arms->push_back(j);
  }
  return x;
}

Mat triangle_hull_data(const Mat& vertices, int n, std::uint64_t seed) {
  if (vertices.cols() != 3 || n < 1) throw Error(ErrorCode::invalid_argument, "triangle_hull_data: need 3 vertices");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  Mat x(n, vertices.rows());
  for (int i = 0; i < n; ++i) {
    Vec w(3);
    for (int k = 0; k < 3; ++k) w[k] = expo(rng);
    x.row(i) = (vertices * (w / w.sum())).transpose();
  }
  return x;
}

}  // namespace starflow
