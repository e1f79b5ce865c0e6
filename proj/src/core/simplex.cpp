#include "starflow/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace starflow {

Vec project_simplex(const Vec& v) {
  const auto k = v.size();
  if (k == 0) throw Error(ErrorCode::invalid_argument, "project_simplex: empty vector");
  if (!v.allFinite()) throw Error(ErrorCode::invalid_argument, "project_simplex: non-finite input");
  std::vector<double> sorted(v.data(), v.data() + k);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double running = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    running += sorted[j];
    const double t = (running - 1.0) / static_cast<double>(j + 1);
    if (sorted[j] - t > 0.0) theta = t;
  }
  Vec w = (v.array() - theta).max(0.0).matrix();
  // Renormalize away the rounding left by the threshold.
  const double s = w.sum();
  if (s > 0.0) w /= s;
  return w;
}

void project_simplex_columns(Mat& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) m.col(j) = project_simplex(m.col(j));
}

bool on_simplex(const Vec& w, double tol) {
  return w.size() > 0 && (w.array() >= -tol).all() && std::abs(w.sum() - 1.0) <= tol;
}

double lambda_max_power(const Mat& g) {
  if (g.rows() != g.cols() || g.rows() == 0) throw Error(ErrorCode::invalid_argument, "lambda_max: need a square matrix");
  Vec v = Vec::Ones(g.rows()) / std::sqrt(static_cast<double>(g.rows()));
  // Tilt the start so it is not orthogonal to the top eigenvector of structured inputs.
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] *= 1.0 + 1e-3 * static_cast<double>(i);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 50; ++it) {
    Vec w = g * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / nw;
    const bool done = it > 0 && std::abs(next - lambda) <= 1e-10 * std::abs(next);
    lambda = next;
    if (done) break;
  }
  // For unit v and PSD g, v^T g v <= |g v| <= lambda_max; keep the tighter one.
  return std::max(lambda, (g * v).norm());
}

}  // namespace starflow
