#pragma once

#include <vector>

#include "starflow/pullback.hpp"
#include "starflow/simplex.hpp"

namespace starflow {

/// K archetypes (columns of `points`) together with their embeddings phi(z_j).
class ArchetypeSet {
 public:
  ArchetypeSet(const Diffeo& phi, Mat points, std::vector<int> labels = {});

  int dim() const { return static_cast<int>(points_.rows()); }
  int count() const { return static_cast<int>(points_.cols()); }
  const Mat& points() const { return points_; }
  const Mat& embedded() const { return embedded_; }
  const std::vector<int>& labels() const { return labels_; }
  /// Largest eigenvalue of phi(Z)^T phi(Z).
  double lambda_max() const { return lambda_max_; }
  /// 1 / lambda_max, the fixed proximal-gradient step of the relaxed problem.
  double relaxed_step() const { return lambda_max_ > 0.0 ? 1.0 / lambda_max_ : 1.0; }

 private:
  Mat points_;
  Mat embedded_;
  std::vector<int> labels_;
  double lambda_max_;
};

/// Numerical rank of [phi(z_1) - phi(z_K), ..., phi(z_{K-1}) - phi(z_K)].
int embedded_rank(const ArchetypeSet& z, double rel_tol = 1e-9);

struct RamConfig {
  double tol = 1e-3;         // relaxed solver: sup-norm change of successive iterates
  double refine_tol = 1e-9;  // refine: same test on the refined iterates
  int max_iter_relaxed = 1000;
  int max_iter_refine = 1000;
  double armijo_c = 1e-4;
  double shrink = 0.5;
  double step_growth = 2.0;  // next trial step = growth * last accepted step (first trial: relaxed step)
  double min_step = 1e-14;
  int iso_samples = kDefaultArcSamples;
};

struct RelaxedResult {
  Vec weights;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // |phi(x) - phi(Z) w|^2 after each iteration
};

struct IsoWeights {
  Vec weights;
  bool degenerate = false;  // all c_j w_j vanished; input returned unchanged
};

struct RamResult {
  Vec weights;          // lambda*
  Vec iso_weights;      // iso-corrected weights
  bool iso_degenerate = false;
  Vec projected;        // phi^{-1}(phi(Z) lambda*)
  Vec relaxed_weights;
  Vec relaxed_point;
  double reconstruction_error = 0.0;  // |projected - x|
  double relaxed_error = 0.0;         // |relaxed_point - x|
  int relaxed_iterations = 0;
  int refine_iterations = 0;
  double final_step = 0.0;
  bool relaxed_converged = false;
  bool converged = false;
  bool step_underflow = false;
  std::vector<double> trace;  // refine objective 0.5 |phi^{-1}(phi(Z) w) - x|^2 per iteration
};

/// phi^{-1}(phi(Z) w)
Vec archetype_combination(const Diffeo& phi, const ArchetypeSet& z, const Vec& w);

/// 0.5 |phi^{-1}(phi(Z) w) - x|^2
double ram_objective(const Diffeo& phi, const ArchetypeSet& z, const Vec& x, const Vec& w);

/// Projected gradient on |phi(x) - phi(Z) w|^2 from uniform weights, fixed step 1/lambda_max.
RelaxedResult relaxed_ram(const Diffeo& phi, const ArchetypeSet& z, const Vec& x, double tol = 1e-3,
                          int max_iter = 1000);

/// Projected gradient with Armijo backtracking on the RAM objective.
RamResult ram_refine(const Diffeo& phi, const ArchetypeSet& z, const Vec& x, const Vec& init,
                     const RamConfig& cfg = {});

IsoWeights iso_correct(const DiffeoPtr& phi, const ArchetypeSet& z, const Vec& p, const Vec& weights,
                       int m = kDefaultArcSamples);

struct ClassMass {
  std::vector<double> masses;  // indexed by class id
  int argmax = 0;              // ties -> lowest class id
};

ClassMass classify_aggregate(const Vec& weights, const std::vector<int>& labels);

/// Relaxed solve, refine from the better of relaxed/uniform weights, then iso-correct.
RamResult ram_full(const DiffeoPtr& phi, const ArchetypeSet& z, const Vec& x, const RamConfig& cfg = {});

/// ram_full for every row of `points`; results are ordered by row.
std::vector<RamResult> ram_batch(const DiffeoPtr& phi, const ArchetypeSet& z, const Mat& points,
                                 const RamConfig& cfg = {}, int threads = 0);

/// Worker count from STARFLOW_THREADS (default: hardware concurrency).
int configured_threads();

}  // namespace starflow
