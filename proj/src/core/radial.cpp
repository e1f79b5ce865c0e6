#include "starflow/radial.hpp"

#include <cmath>

namespace starflow {

ConstantRadial::ConstantRadial(int d, double value) : d_(d), value_(value) {
  if (d < 1) throw Error(ErrorCode::invalid_argument, "constant radial: dimension must be positive");
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw Error(ErrorCode::invalid_argument, "constant radial: value must be positive and finite");
  }
}

LogWarp::LogWarp(double a) : a_(a) {
  if (!(a > 0.0) || !std::isfinite(a)) throw Error(ErrorCode::invalid_argument, "log warp: a must be positive");
}
double LogWarp::value(double s) const { return std::log1p(a_ * s); }
double LogWarp::inverse(double t) const { return std::expm1(t) / a_; }
double LogWarp::derivative(double s) const { return a_ / (a_ * s + 1.0); }

RadialScaling::RadialScaling(RadialPtr rho) : rho_(std::move(rho)) {
  if (!rho_) throw Error(ErrorCode::invalid_argument, "radial scaling: null radial function");
}

Vec RadialScaling::forward(const Vec& x) const {
  check_dim(x, "S_rho forward");
  const double r = x.norm();
  if (r == 0.0) return Vec::Zero(x.size());
  return x / rho_->eval(x / r);
}

Vec RadialScaling::inverse(const Vec& y) const {
  check_dim(y, "S_rho inverse");
  const double r = y.norm();
  if (r == 0.0) return Vec::Zero(y.size());
  return rho_->eval(y / r) * y;
}

Vec RadialScaling::jvp(const Vec& x, const Vec& v) const {
  check_dim(x, "S_rho jvp");
  check_dim(v, "S_rho jvp");
  const double r = x.norm();
  if (r == 0.0) {
    const double nv = v.norm();
    return nv == 0.0 ? Vec::Zero(v.size()) : Vec(v / rho_->eval(v / nv));
  }
  const Vec s = x / r;
  const double rho = rho_->eval(s);
  const Vec g = rho_->grad(s);
  return v / rho - s * (g.dot(v) / (rho * rho));
}

Vec RadialScaling::inverse_jvp(const Vec& y, const Vec& w) const {
  check_dim(y, "S_rho inverse_jvp");
  check_dim(w, "S_rho inverse_jvp");
  const double r = y.norm();
  if (r == 0.0) {
    const double nw = w.norm();
    return nw == 0.0 ? Vec::Zero(w.size()) : Vec(rho_->eval(w / nw) * w);
  }
  const Vec s = y / r;
  return rho_->eval(s) * w + s * rho_->grad(s).dot(w);
}

Vec RadialScaling::inverse_vjp(const Vec& y, const Vec& w) const {
  check_dim(y, "S_rho inverse_vjp");
  check_dim(w, "S_rho inverse_vjp");
  const double r = y.norm();
  if (r == 0.0) {
    const double nw = w.norm();
    return nw == 0.0 ? Vec::Zero(w.size()) : Vec(rho_->eval(w / nw) * w);
  }
  const Vec s = y / r;
  return rho_->eval(s) * w + rho_->grad(s) * s.dot(w);
}

LogDet RadialScaling::log_det(const Vec& x) const {
  check_dim(x, "S_rho log_det");
  const double r = x.norm();
  const double rho = r == 0.0 ? rho_->eval(Vec::Unit(x.size(), 0)) : rho_->eval(x / r);
  // det(I/rho - s g^T / rho^2) = rho^{-d} since g is tangent to s.
  return {-static_cast<double>(x.size()) * std::log(rho), false};
}

NormWarp::NormWarp(int d, WarpPtr warp) : d_(d), warp_(std::move(warp)) {
  if (d < 1) throw Error(ErrorCode::invalid_argument, "norm warp: dimension must be positive");
  if (!warp_) throw Error(ErrorCode::invalid_argument, "norm warp: null warp");
}

Vec NormWarp::forward(const Vec& x) const {
  check_dim(x, "nu forward");
  const double r = x.norm();
  if (r == 0.0) return Vec::Zero(d_);
  return (warp_->value(r) / r) * x;
}

Vec NormWarp::inverse(const Vec& y) const {
  check_dim(y, "nu inverse");
  const double t = y.norm();
  if (t == 0.0) return Vec::Zero(d_);
  return (warp_->inverse(t) / t) * y;
}

Vec NormWarp::jvp(const Vec& x, const Vec& v) const {
  check_dim(x, "nu jvp");
  check_dim(v, "nu jvp");
  const double r = x.norm();
  if (r == 0.0) return warp_->derivative(0.0) * v;
  const Vec s = x / r;
  const double radial = warp_->derivative(r);
  const double tangential = warp_->value(r) / r;
  const double sv = s.dot(v);
  return tangential * v + (radial - tangential) * sv * s;
}

Vec NormWarp::inverse_jvp(const Vec& y, const Vec& w) const {
  check_dim(y, "nu inverse_jvp");
  check_dim(w, "nu inverse_jvp");
  const double t = y.norm();
  if (t == 0.0) return w / warp_->derivative(0.0);
  const Vec s = y / t;
  const double r = warp_->inverse(t);
  const double radial = 1.0 / warp_->derivative(r);
  const double tangential = r / t;
  const double sw = s.dot(w);
  return tangential * w + (radial - tangential) * sw * s;
}

LogDet NormWarp::log_det(const Vec& x) const {
  check_dim(x, "nu log_det");
  const double r = x.norm();
  if (r == 0.0) return {d_ * std::log(warp_->derivative(0.0)), false};
  return {std::log(warp_->derivative(r)) + (d_ - 1) * std::log(warp_->value(r) / r), false};
}

}  // namespace starflow
