#pragma once

#include <span>
#include <vector>

#include "starflow/radial.hpp"

namespace starflow {

/// {y : (y - c)^T Q^{-1} (y - c) <= 1} with Q = U diag(lambda) U^T.
class Ellipsoid {
 public:
  /// Throws unless lambda > 0, U is square with matching size, and c^T Q^{-1} c < 1.
  Ellipsoid(Mat frame, Vec eigenvalues, Vec center);
  static Ellipsoid from_matrix(const Mat& q, Vec center);

  int dim() const { return static_cast<int>(center_.size()); }
  const Mat& frame() const { return frame_; }
  const Vec& eigenvalues() const { return eigenvalues_; }
  const Vec& center() const { return center_; }
  Mat matrix() const;

  Vec apply_inverse(const Vec& v) const;  // Q^{-1} v
  double quadratic(const Vec& y) const;   // (y - c)^T Q^{-1} (y - c)
  /// c^T Q^{-1} c, strictly below 1.
  double center_form() const { return center_form_; }

  /// sup{t > 0 : t s in E} for unit s.
  double radial(const Vec& s) const;
  /// Tangential gradient of the degree-0 extension of radial() at unit s.
  Vec radial_grad(const Vec& s) const;

  double radial_lower_bound() const;
  double radial_upper_bound() const;

 private:
  Mat frame_;
  Vec eigenvalues_;
  Vec center_;
  Vec qinv_center_;
  double center_form_;
};

/// Self-weighted smooth minimum of two values: (a e^{-a/T} + b e^{-b/T}) / (e^{-a/T} + e^{-b/T}).
double softmin2(double a, double b, double temperature);
/// Self-weighted smooth maximum: sum v_k e^{v_k/T} / sum e^{v_k/T}.
double softmaxK(std::span<const double> values, double temperature);

/// Smooth extreme (sign = +1 max, -1 min) and its partial derivatives.
double smooth_extreme(std::span<const double> values, double temperature, double sign,
                      std::span<double> partials);

/// Soft intersection of an off-centered and a centered ellipsoid.
class BranchRadial final : public RadialFn {
 public:
  BranchRadial(Ellipsoid offcentered, Ellipsoid centered, double t_min = 0.1);

  int dim() const override { return offcentered_.dim(); }
  double eval(const Vec& s) const override;
  Vec grad(const Vec& s) const override;
  double rho_min() const override { return lo_; }
  double rho_max() const override { return hi_; }

  const Ellipsoid& offcentered() const { return offcentered_; }
  const Ellipsoid& centered() const { return centered_; }
  double t_min() const { return t_min_; }

 private:
  Ellipsoid offcentered_;
  Ellipsoid centered_;
  double t_min_;
  double lo_, hi_;
};

/// Smooth maximum over branch radial functions.
class StarRadial final : public RadialFn {
 public:
  StarRadial(std::vector<BranchRadial> branches, double t_max = 0.1);

  int dim() const override { return branches_.front().dim(); }
  double eval(const Vec& s) const override;
  Vec grad(const Vec& s) const override;
  double rho_min() const override { return lo_; }
  double rho_max() const override { return hi_; }

  const std::vector<BranchRadial>& branches() const { return branches_; }
  double t_max() const { return t_max_; }

 private:
  std::vector<BranchRadial> branches_;
  double t_max_;
  double lo_, hi_;
};

/// Single-ellipsoid radial function.
class EllipsoidRadial final : public RadialFn {
 public:
  explicit EllipsoidRadial(Ellipsoid e) : e_(std::move(e)) {}
  int dim() const override { return e_.dim(); }
  double eval(const Vec& s) const override { return e_.radial(s); }
  Vec grad(const Vec& s) const override { return e_.radial_grad(s); }
  double rho_min() const override { return e_.radial_lower_bound(); }
  double rho_max() const override { return e_.radial_upper_bound(); }
  const Ellipsoid& ellipsoid() const { return e_; }

 private:
  Ellipsoid e_;
};

struct EllipsoidFitParams {
  double alpha = 1.1;  // > 1
  double beta = 1.0;   // in (0, alpha)
};

/// Columns of `points` are the (latent) samples of one branch.
Ellipsoid fit_offcentered(const Mat& points, const EllipsoidFitParams& params = {});
Ellipsoid fit_centered(const Mat& points, const EllipsoidFitParams& params = {});

}  // namespace starflow
