#include "starflow/latent_aa.hpp"

#include <cmath>
#include <random>

#include "starflow/simplex.hpp"

namespace starflow {

namespace {

double sym_lambda_max(const Mat& g) {
  Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

// FurthestSum selection of k distinct columns, seeded by a random reference column.
std::vector<Eigen::Index> furthest_sum(const Mat& y, int k, std::uint64_t seed) {
  const auto n = y.cols();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  const Eigen::Index ref = pick(rng);
  std::vector<bool> taken(n, false);
  Vec score = (y.colwise() - y.col(ref)).colwise().norm().transpose();
  std::vector<Eigen::Index> chosen;
  for (int j = 0; j < k; ++j) {
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (taken[i] || (i == ref && n > k)) continue;
      if (best < 0 || score[i] > score[best]) best = i;
    }
    taken[best] = true;
    chosen.push_back(best);
    score += (y.colwise() - y.col(best)).colwise().norm().transpose();
  }
  return chosen;
}

void a_step(const Mat& y, const Mat& b, Mat& a, int steps) {
  const Mat x = y * b;
  const Mat gram = x.transpose() * x;
  const double l = sym_lambda_max(gram);
  if (!(l > 0.0)) return;
  const Mat rhs = x.transpose() * y;
  for (int s = 0; s < steps; ++s) {
    a -= (gram * a - rhs) / l;
    project_simplex_columns(a);
  }
}

void b_step(const Mat& y, double l_y, Mat& b, const Mat& a, int steps) {
  const double l = l_y * sym_lambda_max(a * a.transpose());
  if (!(l > 0.0)) return;
  for (int s = 0; s < steps; ++s) {
    const Mat resid = y * b * a - y;
    b -= (y.transpose() * (resid * a.transpose())) / l;
    project_simplex_columns(b);
  }
}

}  // namespace

double aa_objective(const Mat& y, const Mat& b, const Mat& a) { return (y - y * b * a).squaredNorm(); }

AAFactors aa_fit(const Mat& y, int k, const AAConfig& cfg) {
  const auto n = y.cols();
  if (k < 1) throw Error(ErrorCode::invalid_argument, "aa_fit: K must be positive");
  if (k > n) throw Error(ErrorCode::invalid_argument, "aa_fit: K exceeds the number of points");
  if (!y.allFinite()) throw Error(ErrorCode::invalid_argument, "aa_fit: non-finite data");

  // The objective is unchanged by translating Y when B and A are column-stochastic.
  const Mat yc = y.colwise() - y.rowwise().mean();
  const double l_y = sym_lambda_max(yc * yc.transpose());

  AAFactors f;
  f.b = Mat::Zero(n, k);
  const auto init = furthest_sum(yc, k, cfg.seed);
  for (int j = 0; j < k; ++j) f.b(init[j], j) = 1.0;
  f.a = Mat::Constant(k, n, 1.0 / k);
  a_step(yc, f.b, f.a, 1);

  double prev = aa_objective(yc, f.b, f.a);
  for (int it = 1; it <= cfg.max_outer; ++it) {
    a_step(yc, f.b, f.a, cfg.inner_steps);
    b_step(yc, l_y, f.b, f.a, cfg.inner_steps);
    const double obj = aa_objective(yc, f.b, f.a);
    f.trace.push_back(obj);
    f.iterations = it;
    const bool done = std::abs(prev - obj) <= cfg.rel_tol * std::max(prev, 1e-300);
    prev = obj;
    if (done) break;
  }
  f.objective = prev;
  return f;
}

Mat decode_archetypes(const Diffeo& phi_a, const Mat& y, const Mat& b) {
  require_dim(y.rows(), phi_a.dim(), "decode_archetypes");
  require_dim(b.rows(), y.cols(), "decode_archetypes");
  const Mat latent = y * b;
  Mat out(latent.rows(), latent.cols());
  for (Eigen::Index j = 0; j < latent.cols(); ++j) out.col(j) = phi_a.inverse(latent.col(j));
  return out;
}

std::vector<int> assign_labels(const Mat& a) {
  std::vector<int> labels(a.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < a.rows(); ++j) {
      if (a(j, i) > a(best, i)) best = j;
    }
    labels[i] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace starflow
