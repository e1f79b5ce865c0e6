#pragma once

#include <memory>

#include "starflow/diffeo.hpp"

namespace starflow {

/// Positive function on the unit sphere with declared bounds.
class RadialFn {
 public:
  virtual ~RadialFn() = default;
  virtual int dim() const = 0;
  /// rho(s) for unit s.
  virtual double eval(const Vec& s) const = 0;
  /// Gradient of x -> rho(x / |x|) at unit s; tangent to the sphere.
  virtual Vec grad(const Vec& s) const = 0;
  virtual double rho_min() const = 0;
  virtual double rho_max() const = 0;
};

using RadialPtr = std::shared_ptr<const RadialFn>;

class ConstantRadial final : public RadialFn {
 public:
  ConstantRadial(int d, double value);
  int dim() const override { return d_; }
  double eval(const Vec&) const override { return value_; }
  Vec grad(const Vec&) const override { return Vec::Zero(d_); }
  double rho_min() const override { return value_; }
  double rho_max() const override { return value_; }
  double value() const { return value_; }

 private:
  int d_;
  double value_;
};

/// Strictly increasing concave nu: (0, inf) -> (0, inf) with nu(0+) = 0.
class ConcaveWarp {
 public:
  virtual ~ConcaveWarp() = default;
  virtual double value(double s) const = 0;
  virtual double inverse(double t) const = 0;
  virtual double derivative(double s) const = 0;
};

using WarpPtr = std::shared_ptr<const ConcaveWarp>;

class IdentityWarp final : public ConcaveWarp {
 public:
  double value(double s) const override { return s; }
  double inverse(double t) const override { return t; }
  double derivative(double) const override { return 1.0; }
};

/// nu(s) = log(a s + 1)
class LogWarp final : public ConcaveWarp {
 public:
  explicit LogWarp(double a = 10.0);
  double value(double s) const override;
  double inverse(double t) const override;
  double derivative(double s) const override;
  double a() const { return a_; }

 private:
  double a_;
};

/// S_rho(x) = x / rho(x/|x|), 0 -> 0.
class RadialScaling final : public Diffeo {
 public:
  explicit RadialScaling(RadialPtr rho);

  int dim() const override { return rho_->dim(); }
  Vec forward(const Vec& x) const override;
  Vec inverse(const Vec& y) const override;
  // At the origin these return the directional limits along v (resp. w).
  Vec jvp(const Vec& x, const Vec& v) const override;
  Vec inverse_jvp(const Vec& y, const Vec& w) const override;
  Vec inverse_vjp(const Vec& y, const Vec& w) const override;
  LogDet log_det(const Vec& x) const override;

  const RadialFn& radial() const { return *rho_; }

 private:
  RadialPtr rho_;
};

/// nu_nu(x) = nu(|x|) x/|x|, 0 -> 0.
class NormWarp final : public Diffeo {
 public:
  NormWarp(int d, WarpPtr warp);

  int dim() const override { return d_; }
  Vec forward(const Vec& x) const override;
  Vec inverse(const Vec& y) const override;
  Vec jvp(const Vec& x, const Vec& v) const override;
  Vec inverse_jvp(const Vec& y, const Vec& w) const override;
  Vec inverse_vjp(const Vec& y, const Vec& w) const override { return inverse_jvp(y, w); }
  LogDet log_det(const Vec& x) const override;

  const ConcaveWarp& warp() const { return *warp_; }

 private:
  int d_;
  WarpPtr warp_;
};

}  // namespace starflow
