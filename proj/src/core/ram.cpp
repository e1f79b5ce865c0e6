#include "starflow/ram.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace starflow {

ArchetypeSet::ArchetypeSet(const Diffeo& phi, Mat points, std::vector<int> labels)
    : points_(std::move(points)), labels_(std::move(labels)) {
  if (points_.cols() < 1) throw Error(ErrorCode::invalid_argument, "archetype set: need at least one archetype");
  require_dim(points_.rows(), phi.dim(), "archetype set");
  if (!labels_.empty() && static_cast<Eigen::Index>(labels_.size()) != points_.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "archetype set: one label per archetype required");
  }
  embedded_.resize(points_.rows(), points_.cols());
  for (Eigen::Index j = 0; j < points_.cols(); ++j) embedded_.col(j) = phi.forward(points_.col(j));
  lambda_max_ = lambda_max_power(embedded_.transpose() * embedded_);
}

int embedded_rank(const ArchetypeSet& z, double rel_tol) {
  const int k = z.count();
  if (k < 2) return 0;
  Mat diff(z.dim(), k - 1);
  for (int j = 0; j < k - 1; ++j) diff.col(j) = z.embedded().col(j) - z.embedded().col(k - 1);
  Eigen::JacobiSVD<Mat> svd(diff);
  const Vec sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) rank += sv[i] > rel_tol * sv[0] ? 1 : 0;
  return rank;
}

Vec archetype_combination(const Diffeo& phi, const ArchetypeSet& z, const Vec& w) {
  require_dim(w.size(), z.count(), "archetype weights");
  return phi.inverse(z.embedded() * w);
}

double ram_objective(const Diffeo& phi, const ArchetypeSet& z, const Vec& x, const Vec& w) {
  return 0.5 * (archetype_combination(phi, z, w) - x).squaredNorm();
}

RelaxedResult relaxed_ram(const Diffeo& phi, const ArchetypeSet& z, const Vec& x, double tol, int max_iter) {
  require_dim(x.size(), z.dim(), "relaxed_ram");
  const int k = z.count();
  const Mat& e = z.embedded();
  const Vec fx = phi.forward(x);
  const Mat gram = e.transpose() * e;
  const Vec rhs = e.transpose() * fx;
  const double step = z.relaxed_step();

  RelaxedResult res;
  Vec w = Vec::Constant(k, 1.0 / k);
  for (int it = 1; it <= max_iter; ++it) {
    Vec next = project_simplex(w - step * (gram * w - rhs));
    const double change = (next - w).cwiseAbs().maxCoeff();
    w = std::move(next);
    res.iterations = it;
    res.trace.push_back((fx - e * w).squaredNorm());
    if (change < tol) {
      res.converged = true;
      break;
    }
  }
  res.weights = std::move(w);
  return res;
}

RamResult ram_refine(const Diffeo& phi, const ArchetypeSet& z, const Vec& x, const Vec& init,
                     const RamConfig& cfg) {
  require_dim(x.size(), z.dim(), "ram_refine");
  require_dim(init.size(), z.count(), "ram_refine init");
  if (!on_simplex(init, 1e-8)) throw Error(ErrorCode::invalid_argument, "ram_refine: init must lie on the simplex");
  const Mat& e = z.embedded();
  const double step0 = z.relaxed_step();

  RamResult res;
  Vec w = init;
  Vec y = e * w;
  Vec p = phi.inverse(y);
  double f = 0.5 * (p - x).squaredNorm();
  double step = step0;
  double trial = step0;
  for (int it = 1; it <= cfg.max_iter_refine; ++it) {
    const Vec grad = e.transpose() * phi.inverse_vjp(y, p - x);
    step = trial;
    bool accepted = false;
    bool stationary = false;
    Vec next, next_y, next_p;
    double next_f = f;
    while (step >= cfg.min_step) {
      next = project_simplex(w - step * grad);
      const Vec delta = next - w;
      if (delta.cwiseAbs().maxCoeff() == 0.0) {
        stationary = true;
        break;
      }
      next_y = e * next;
      next_p = phi.inverse(next_y);
      next_f = 0.5 * (next_p - x).squaredNorm();
      if (std::isfinite(next_f) && next_f <= f + cfg.armijo_c * grad.dot(delta)) {
        accepted = true;
        break;
      }
      step *= cfg.shrink;
    }
    if (stationary) {
      res.converged = true;
      break;
    }
    if (!accepted) {
      res.step_underflow = true;
      break;
    }
    const double change = (next - w).cwiseAbs().maxCoeff();
    trial = cfg.step_growth * step;
    w = std::move(next);
    y = std::move(next_y);
    p = std::move(next_p);
    f = next_f;
    res.refine_iterations = it;
    res.trace.push_back(f);
    if (change < cfg.refine_tol) {
      res.converged = true;
      break;
    }
  }
  res.final_step = step;
  res.weights = w;
  res.projected = p;
  res.reconstruction_error = (p - x).norm();
  res.iso_weights = w;
  return res;
}

IsoWeights iso_correct(const DiffeoPtr& phi, const ArchetypeSet& z, const Vec& p, const Vec& weights, int m) {
  require_dim(weights.size(), z.count(), "iso_correct");
  require_dim(p.size(), z.dim(), "iso_correct");
  if (!on_simplex(weights, 1e-8)) throw Error(ErrorCode::invalid_argument, "iso_correct: weights must lie on the simplex");
  if (dynamic_cast<const IdentityDiffeo*>(phi.get())) return {weights, false};
  Vec scaled(weights.size());
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    const Vec zj = z.points().col(j);
    const bool same = (zj - p).norm() <= 1e-12 * (1.0 + p.norm());
    const double c = (same || weights[j] == 0.0) ? 1.0 : iso_log_scale(phi, p, zj, m);
    scaled[j] = c * weights[j];
  }
  const double total = scaled.sum();
  if (!(total > 0.0) || !std::isfinite(total)) return {weights, true};
  return {scaled / total, false};
}

ClassMass classify_aggregate(const Vec& weights, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != weights.size()) {
    throw Error(ErrorCode::dimension_mismatch, "classify_aggregate: one label per weight required");
  }
  int classes = 0;
  for (int l : labels) {
    if (l < 0) throw Error(ErrorCode::invalid_argument, "classify_aggregate: negative class id");
    classes = std::max(classes, l + 1);
  }
  ClassMass out;
  out.masses.assign(classes, 0.0);
  for (std::size_t j = 0; j < labels.size(); ++j) out.masses[labels[j]] += weights[static_cast<Eigen::Index>(j)];
  for (int c = 1; c < classes; ++c) {
    if (out.masses[c] > out.masses[out.argmax]) out.argmax = c;
  }
  return out;
}

RamResult ram_full(const DiffeoPtr& phi, const ArchetypeSet& z, const Vec& x, const RamConfig& cfg) {
  const RelaxedResult rel = relaxed_ram(*phi, z, x, cfg.tol, cfg.max_iter_relaxed);
  const Vec uniform = Vec::Constant(z.count(), 1.0 / z.count());
  const Vec relaxed_point = archetype_combination(*phi, z, rel.weights);
  const double f_rel = 0.5 * (relaxed_point - x).squaredNorm();
  const double f_uni = ram_objective(*phi, z, x, uniform);
  const Vec& start = f_uni < f_rel ? uniform : rel.weights;

  RamResult res = ram_refine(*phi, z, x, start, cfg);
  res.relaxed_weights = rel.weights;
  res.relaxed_point = relaxed_point;
  res.relaxed_error = (relaxed_point - x).norm();
  res.relaxed_iterations = rel.iterations;
  res.relaxed_converged = rel.converged;
  const IsoWeights iso = iso_correct(phi, z, res.projected, res.weights, cfg.iso_samples);
  res.iso_weights = iso.weights;
  res.iso_degenerate = iso.degenerate;
  return res;
}

int configured_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("STARFLOW_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) n = v;
  }
  return std::max(1, n);
}

std::vector<RamResult> ram_batch(const DiffeoPtr& phi, const ArchetypeSet& z, const Mat& points,
                                 const RamConfig& cfg, int threads) {
  require_dim(points.cols(), z.dim(), "ram_batch");
  const auto n = static_cast<int>(points.rows());
  std::vector<RamResult> out(n);
  if (threads <= 0) threads = configured_threads();
  threads = std::clamp(threads, 1, std::max(1, n));
  auto work = [&](int tid) {
    for (int i = tid; i < n; i += threads) out[i] = ram_full(phi, z, points.row(i).transpose(), cfg);
  };
  if (threads == 1) {
    work(0);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        work(t);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace starflow
