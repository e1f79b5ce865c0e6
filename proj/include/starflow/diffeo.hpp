#pragma once

#include <memory>
#include <vector>

#include "starflow/types.hpp"

namespace starflow {

struct LogDet {
  double value = 0.0;
  bool constant = false;  // true when the value does not depend on the input
};

/// Smooth invertible map R^d -> R^d.
///
/// Derived classes must provide forward/inverse. Differentials default to
/// central finite differences with step 1e-5 * (1 + |x|_inf); override them
/// where an analytic form is available.
class Diffeo {
 public:
  virtual ~Diffeo() = default;

  virtual int dim() const = 0;
  virtual Vec forward(const Vec& x) const = 0;
  virtual Vec inverse(const Vec& y) const = 0;

  /// D_x phi [v]
  virtual Vec jvp(const Vec& x, const Vec& v) const;
  /// D_y phi^{-1} [w]
  virtual Vec inverse_jvp(const Vec& y, const Vec& w) const;
  /// (D_y phi^{-1})^T w
  virtual Vec inverse_vjp(const Vec& y, const Vec& w) const;

  virtual LogDet log_det(const Vec& x) const;

  Mat jacobian(const Vec& x) const;
  Mat inverse_jacobian(const Vec& y) const;

 protected:
  void check_dim(const Vec& x, const char* what) const { require_dim(x.size(), dim(), what); }
};

using DiffeoPtr = std::shared_ptr<const Diffeo>;

double fd_step(const Vec& x);

class IdentityDiffeo final : public Diffeo {
 public:
  explicit IdentityDiffeo(int d);
  int dim() const override { return d_; }
  Vec forward(const Vec& x) const override;
  Vec inverse(const Vec& y) const override;
  Vec jvp(const Vec& x, const Vec& v) const override;
  Vec inverse_jvp(const Vec& y, const Vec& w) const override;
  Vec inverse_vjp(const Vec& y, const Vec& w) const override;
  LogDet log_det(const Vec& x) const override;

 private:
  int d_;
};

/// x -> A x + b with A invertible.
class AffineDiffeo final : public Diffeo {
 public:
  AffineDiffeo(Mat a, Vec b);
  static std::shared_ptr<AffineDiffeo> scaling(int d, double r);

  int dim() const override { return static_cast<int>(b_.size()); }
  Vec forward(const Vec& x) const override;
  Vec inverse(const Vec& y) const override;
  Vec jvp(const Vec& x, const Vec& v) const override;
  Vec inverse_jvp(const Vec& y, const Vec& w) const override;
  Vec inverse_vjp(const Vec& y, const Vec& w) const override;
  LogDet log_det(const Vec& x) const override;

  const Mat& matrix() const { return a_; }
  const Vec& offset() const { return b_; }

 private:
  Mat a_;
  Vec b_;
  Eigen::PartialPivLU<Mat> lu_;
  double log_det_;
};

/// phi = f_n o ... o f_1, stored in application order (f_1 first).
class ComposedDiffeo final : public Diffeo {
 public:
  explicit ComposedDiffeo(std::vector<DiffeoPtr> parts);

  int dim() const override { return d_; }
  Vec forward(const Vec& x) const override;
  Vec inverse(const Vec& y) const override;
  Vec jvp(const Vec& x, const Vec& v) const override;
  Vec inverse_jvp(const Vec& y, const Vec& w) const override;
  Vec inverse_vjp(const Vec& y, const Vec& w) const override;
  LogDet log_det(const Vec& x) const override;

  const std::vector<DiffeoPtr>& parts() const { return parts_; }

 private:
  // Points visited by the inverse pass: result[i] is the input of parts_[i]'s inverse.
  std::vector<Vec> inverse_trace(const Vec& y) const;

  std::vector<DiffeoPtr> parts_;
  int d_;
};

DiffeoPtr compose(std::vector<DiffeoPtr> parts);

}  // namespace starflow
