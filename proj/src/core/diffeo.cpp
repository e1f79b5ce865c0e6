#include "starflow/diffeo.hpp"

#include <cmath>

namespace starflow {

double fd_step(const Vec& x) {
  const double scale = x.size() > 0 ? x.cwiseAbs().maxCoeff() : 0.0;
  return 1e-5 * (1.0 + scale);
}

Vec Diffeo::jvp(const Vec& x, const Vec& v) const {
  check_dim(x, "jvp");
  check_dim(v, "jvp");
  const double h = fd_step(x);
  return (forward(x + h * v) - forward(x - h * v)) / (2.0 * h);
}

Vec Diffeo::inverse_jvp(const Vec& y, const Vec& w) const {
  check_dim(y, "inverse_jvp");
  check_dim(w, "inverse_jvp");
  const double h = fd_step(y);
  return (inverse(y + h * w) - inverse(y - h * w)) / (2.0 * h);
}

Vec Diffeo::inverse_vjp(const Vec& y, const Vec& w) const {
  check_dim(w, "inverse_vjp");
  return inverse_jacobian(y).transpose() * w;
}

LogDet Diffeo::log_det(const Vec& x) const {
  const auto lu = jacobian(x).partialPivLu();
  return {std::log(std::abs(lu.determinant())), false};
}

Mat Diffeo::jacobian(const Vec& x) const {
  check_dim(x, "jacobian");
  const int d = dim();
  Mat j(d, d);
  for (int k = 0; k < d; ++k) j.col(k) = jvp(x, Vec::Unit(d, k));
  return j;
}

Mat Diffeo::inverse_jacobian(const Vec& y) const {
  check_dim(y, "inverse_jacobian");
  const int d = dim();
  Mat j(d, d);
  for (int k = 0; k < d; ++k) j.col(k) = inverse_jvp(y, Vec::Unit(d, k));
  return j;
}

IdentityDiffeo::IdentityDiffeo(int d) : d_(d) {
  if (d <= 0) throw Error(ErrorCode::invalid_argument, "identity diffeo: dimension must be positive");
}
Vec IdentityDiffeo::forward(const Vec& x) const { check_dim(x, "identity"); return x; }
Vec IdentityDiffeo::inverse(const Vec& y) const { check_dim(y, "identity"); return y; }
Vec IdentityDiffeo::jvp(const Vec&, const Vec& v) const { check_dim(v, "identity"); return v; }
Vec IdentityDiffeo::inverse_jvp(const Vec&, const Vec& w) const { check_dim(w, "identity"); return w; }
Vec IdentityDiffeo::inverse_vjp(const Vec&, const Vec& w) const { check_dim(w, "identity"); return w; }
LogDet IdentityDiffeo::log_det(const Vec&) const { return {0.0, true}; }

AffineDiffeo::AffineDiffeo(Mat a, Vec b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() != a_.cols() || a_.rows() != b_.size() || b_.size() == 0) {
    throw Error(ErrorCode::dimension_mismatch, "affine diffeo: matrix/offset shape mismatch");
  }
  lu_.compute(a_);
  const double det = lu_.determinant();
  if (!(std::abs(det) > 0.0) || !std::isfinite(det)) {
    throw Error(ErrorCode::invalid_argument, "affine diffeo: matrix is singular");
  }
  log_det_ = std::log(std::abs(det));
}

std::shared_ptr<AffineDiffeo> AffineDiffeo::scaling(int d, double r) {
  return std::make_shared<AffineDiffeo>(r * Mat::Identity(d, d), Vec::Zero(d));
}

Vec AffineDiffeo::forward(const Vec& x) const { check_dim(x, "affine"); return a_ * x + b_; }
Vec AffineDiffeo::inverse(const Vec& y) const { check_dim(y, "affine"); return lu_.solve(y - b_); }
Vec AffineDiffeo::jvp(const Vec&, const Vec& v) const { check_dim(v, "affine"); return a_ * v; }
Vec AffineDiffeo::inverse_jvp(const Vec&, const Vec& w) const { check_dim(w, "affine"); return lu_.solve(w); }
Vec AffineDiffeo::inverse_vjp(const Vec&, const Vec& w) const {
  check_dim(w, "affine");
  return lu_.transpose().solve(w);
}
LogDet AffineDiffeo::log_det(const Vec&) const { return {log_det_, true}; }

ComposedDiffeo::ComposedDiffeo(std::vector<DiffeoPtr> parts) : parts_(std::move(parts)) {
  if (parts_.empty()) throw Error(ErrorCode::invalid_argument, "compose: no parts");
  d_ = parts_.front()->dim();
  for (const auto& p : parts_) {
    if (!p) throw Error(ErrorCode::invalid_argument, "compose: null part");
    require_dim(p->dim(), d_, "compose");
  }
}

Vec ComposedDiffeo::forward(const Vec& x) const {
  check_dim(x, "composed forward");
  Vec z = x;
  for (const auto& p : parts_) z = p->forward(z);
  return z;
}

Vec ComposedDiffeo::inverse(const Vec& y) const {
  check_dim(y, "composed inverse");
  Vec z = y;
  for (auto it = parts_.rbegin(); it != parts_.rend(); ++it) z = (*it)->inverse(z);
  return z;
}

Vec ComposedDiffeo::jvp(const Vec& x, const Vec& v) const {
  check_dim(x, "composed jvp");
  check_dim(v, "composed jvp");
  Vec z = x;
  Vec dz = v;
  for (const auto& p : parts_) {
    dz = p->jvp(z, dz);
    z = p->forward(z);
  }
  return dz;
}

std::vector<Vec> ComposedDiffeo::inverse_trace(const Vec& y) const {
  std::vector<Vec> pts(parts_.size());
  Vec z = y;
  for (std::size_t i = parts_.size(); i-- > 0;) {
    pts[i] = z;
    z = parts_[i]->inverse(z);
  }
  return pts;
}

Vec ComposedDiffeo::inverse_jvp(const Vec& y, const Vec& w) const {
  check_dim(y, "composed inverse_jvp");
  check_dim(w, "composed inverse_jvp");
  Vec z = y;
  Vec dz = w;
  for (auto it = parts_.rbegin(); it != parts_.rend(); ++it) {
    dz = (*it)->inverse_jvp(z, dz);
    z = (*it)->inverse(z);
  }
  return dz;
}

Vec ComposedDiffeo::inverse_vjp(const Vec& y, const Vec& w) const {
  check_dim(y, "composed inverse_vjp");
  check_dim(w, "composed inverse_vjp");
  // phi^{-1} = g_1 o ... o g_n with g_i = f_i^{-1}; the transpose chain runs g_1 first.
  const auto pts = inverse_trace(y);
  Vec g = w;
  for (std::size_t i = 0; i < parts_.size(); ++i) g = parts_[i]->inverse_vjp(pts[i], g);
  return g;
}

LogDet ComposedDiffeo::log_det(const Vec& x) const {
  check_dim(x, "composed log_det");
  LogDet total{0.0, true};
  Vec z = x;
  for (const auto& p : parts_) {
    const LogDet ld = p->log_det(z);
    total.value += ld.value;
    total.constant = total.constant && ld.constant;
    z = p->forward(z);
  }
  return total;
}

DiffeoPtr compose(std::vector<DiffeoPtr> parts) {
  if (parts.size() == 1) return parts.front();
  return std::make_shared<ComposedDiffeo>(std::move(parts));
}

}  // namespace starflow
