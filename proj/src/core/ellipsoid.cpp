#include "starflow/ellipsoid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace starflow {

namespace {

constexpr double kInvE = 0.36787944117144233;

void check_unit(const Vec& s, const char* what) {
  if (std::abs(s.norm() - 1.0) > 1e-8) {
    throw Error(ErrorCode::invalid_argument, std::string(what) + ": direction must be a unit vector");
  }
}

// Orthonormal basis of the complement of unit u, as the last d-1 columns of a
// Householder reflection mapping e_1 to u.
Mat complement_basis(const Vec& u) {
  const auto d = u.size();
  Vec w = u - Vec::Unit(d, 0);
  const double nw = w.norm();
  Mat h = Mat::Identity(d, d);
  if (nw > 1e-14) {
    w /= nw;
    h -= 2.0 * w * w.transpose();
  }
  return h.rightCols(d - 1);
}

}  // namespace

Ellipsoid::Ellipsoid(Mat frame, Vec eigenvalues, Vec center)
    : frame_(std::move(frame)), eigenvalues_(std::move(eigenvalues)), center_(std::move(center)) {
  const auto d = center_.size();
  if (d < 1 || frame_.rows() != d || frame_.cols() != d || eigenvalues_.size() != d) {
    throw Error(ErrorCode::dimension_mismatch, "ellipsoid: frame/eigenvalue/center shape mismatch");
  }
  if (!(eigenvalues_.array() > 0.0).all() || !eigenvalues_.allFinite()) {
    throw Error(ErrorCode::invalid_argument, "ellipsoid: eigenvalues must be positive and finite");
  }
  if ((frame_.transpose() * frame_ - Mat::Identity(d, d)).cwiseAbs().maxCoeff() > 1e-8) {
    throw Error(ErrorCode::invalid_argument, "ellipsoid: frame is not orthonormal");
  }
  qinv_center_ = apply_inverse(center_);
  center_form_ = center_.dot(qinv_center_);
  if (!(center_form_ < 1.0)) {
    throw Error(ErrorCode::invalid_argument,
                "ellipsoid: origin is not interior (c^T Q^{-1} c = " + std::to_string(center_form_) + ")");
  }
}

Ellipsoid Ellipsoid::from_matrix(const Mat& q, Vec center) {
  Eigen::SelfAdjointEigenSolver<Mat> es(q);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::numerical, "ellipsoid: eigendecomposition failed");
  return Ellipsoid(es.eigenvectors(), es.eigenvalues(), std::move(center));
}

Mat Ellipsoid::matrix() const { return frame_ * eigenvalues_.asDiagonal() * frame_.transpose(); }

Vec Ellipsoid::apply_inverse(const Vec& v) const {
  return frame_ * (frame_.transpose() * v).cwiseQuotient(eigenvalues_);
}

double Ellipsoid::quadratic(const Vec& y) const {
  const Vec r = y - center_;
  return r.dot(apply_inverse(r));
}

double Ellipsoid::radial(const Vec& s) const {
  check_unit(s, "ellipsoid radial");
  const double a = s.dot(qinv_center_);
  const double b = s.dot(apply_inverse(s));
  const double k = 1.0 - center_form_;
  const double disc = std::sqrt(a * a + b * k);
  // Rationalized form avoids cancellation when a < 0.
  return a >= 0.0 ? (a + disc) / b : k / (disc - a);
}

Vec Ellipsoid::radial_grad(const Vec& s) const {
  check_unit(s, "ellipsoid radial_grad");
  const Vec q = apply_inverse(s);
  const double a = s.dot(qinv_center_);
  const double b = s.dot(q);
  const double k = 1.0 - center_form_;
  const double disc = std::sqrt(a * a + b * k);
  const double h = a >= 0.0 ? (a + disc) / b : k / (disc - a);
  // h is homogeneous of degree -1 in s; |x| h(x) is the degree-0 extension.
  Vec grad_h = ((1.0 + a / disc) / b) * qinv_center_ + (k / (disc * b) - 2.0 * h / b) * q;
  Vec g = grad_h + h * s;
  g -= s * s.dot(g);
  return g;
}

double Ellipsoid::radial_lower_bound() const {
  return std::sqrt(eigenvalues_.minCoeff()) * (1.0 - std::sqrt(center_form_));
}

double Ellipsoid::radial_upper_bound() const {
  return std::sqrt(eigenvalues_.maxCoeff()) * (1.0 + std::sqrt(center_form_));
}

double smooth_extreme(std::span<const double> values, double temperature, double sign,
                      std::span<double> partials) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::invalid_argument, "smooth extreme: temperature must be positive");
  if (values.empty()) throw Error(ErrorCode::invalid_argument, "smooth extreme: no values");
  const double pivot = sign > 0 ? *std::max_element(values.begin(), values.end())
                                : *std::min_element(values.begin(), values.end());
  double z = 0.0;
  double num = 0.0;
  std::vector<double> w(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    w[i] = std::exp(sign * (values[i] - pivot) / temperature);
    z += w[i];
    num += w[i] * values[i];
  }
  const double m = num / z;
  if (!partials.empty()) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double p = w[i] / z;
      partials[i] = p * (1.0 + sign * (values[i] - m) / temperature);
    }
  }
  return m;
}

double softmin2(double a, double b, double temperature) {
  const double v[2] = {a, b};
  return smooth_extreme(v, temperature, -1.0, {});
}

double softmaxK(std::span<const double> values, double temperature) {
  return smooth_extreme(values, temperature, 1.0, {});
}

BranchRadial::BranchRadial(Ellipsoid offcentered, Ellipsoid centered, double t_min)
    : offcentered_(std::move(offcentered)), centered_(std::move(centered)), t_min_(t_min) {
  require_dim(centered_.dim(), offcentered_.dim(), "branch radial");
  if (!(t_min_ > 0.0)) throw Error(ErrorCode::invalid_argument, "branch radial: temperature must be positive");
  if (centered_.center().norm() != 0.0) {
    throw Error(ErrorCode::invalid_argument, "branch radial: centered ellipsoid must have zero center");
  }
  const double lo_o = offcentered_.radial_lower_bound();
  const double lo_c = centered_.radial_lower_bound();
  const double hi_o = offcentered_.radial_upper_bound();
  const double hi_c = centered_.radial_upper_bound();
  lo_ = std::min(lo_o, lo_c);
  hi_ = std::min(0.5 * (hi_o + hi_c), std::min(hi_o, hi_c) + t_min_ * kInvE);
}

double BranchRadial::eval(const Vec& s) const {
  return softmin2(offcentered_.radial(s), centered_.radial(s), t_min_);
}

Vec BranchRadial::grad(const Vec& s) const {
  const double v[2] = {offcentered_.radial(s), centered_.radial(s)};
  double p[2];
  smooth_extreme(v, t_min_, -1.0, p);
  return p[0] * offcentered_.radial_grad(s) + p[1] * centered_.radial_grad(s);
}

StarRadial::StarRadial(std::vector<BranchRadial> branches, double t_max)
    : branches_(std::move(branches)), t_max_(t_max) {
  if (branches_.empty()) throw Error(ErrorCode::invalid_argument, "star radial: no branches");
  if (!(t_max_ > 0.0)) throw Error(ErrorCode::invalid_argument, "star radial: temperature must be positive");
  double lo_sum = 0.0, lo_best = 0.0;
  hi_ = 0.0;
  for (const auto& b : branches_) {
    require_dim(b.dim(), branches_.front().dim(), "star radial");
    lo_sum += b.rho_min();
    lo_best = std::max(lo_best, b.rho_min());
    hi_ = std::max(hi_, b.rho_max());
  }
  const double k = static_cast<double>(branches_.size());
  lo_ = std::max(lo_sum / k, lo_best - (k - 1.0) * t_max_ * kInvE);
}

double StarRadial::eval(const Vec& s) const {
  std::vector<double> v(branches_.size());
  for (std::size_t j = 0; j < branches_.size(); ++j) v[j] = branches_[j].eval(s);
  return softmaxK(v, t_max_);
}

Vec StarRadial::grad(const Vec& s) const {
  std::vector<double> v(branches_.size()), p(branches_.size());
  for (std::size_t j = 0; j < branches_.size(); ++j) v[j] = branches_[j].eval(s);
  smooth_extreme(v, t_max_, 1.0, p);
  Vec g = Vec::Zero(s.size());
  for (std::size_t j = 0; j < branches_.size(); ++j) {
    if (p[j] != 0.0) g += p[j] * branches_[j].grad(s);
  }
  return g;
}

namespace {

void check_fit_inputs(const Mat& points, const EllipsoidFitParams& params) {
  if (points.cols() < 1 || points.rows() < 1) {
    throw Error(ErrorCode::invalid_argument, "ellipsoid fit: need at least one point");
  }
  if (!points.allFinite()) throw Error(ErrorCode::invalid_argument, "ellipsoid fit: non-finite data");
  if (!(params.alpha > 1.0) || !(params.beta > 0.0) || !(params.beta < params.alpha)) {
    throw Error(ErrorCode::invalid_argument, "ellipsoid fit: require alpha > 1 and 0 < beta < alpha");
  }
}

// Frame [c/|c|, W] and the singular values of (I - P_c) Y along W (zero padded).
struct MeanFrame {
  Mat frame;
  Vec sigma;  // d-1 entries
};

MeanFrame mean_frame(const Mat& points, const Vec& c) {
  const auto d = points.rows();
  const Vec u = c / c.norm();
  MeanFrame f;
  f.frame.resize(d, d);
  f.frame.col(0) = u;
  f.sigma = Vec::Zero(d - 1);
  if (d == 1) return f;
  const Mat basis = complement_basis(u);
  const Mat projected = basis.transpose() * points;
  Eigen::JacobiSVD<Mat> svd(projected, Eigen::ComputeFullU);
  f.frame.rightCols(d - 1) = basis * svd.matrixU();
  const Vec sv = svd.singularValues();
  f.sigma.head(sv.size()) = sv;
  return f;
}

// Centered construction on an SVD frame of Y, used when the mean vanishes.
Ellipsoid fit_zero_mean(const Mat& points, const EllipsoidFitParams& params) {
  const auto d = points.rows();
  const double n = static_cast<double>(points.cols());
  Eigen::JacobiSVD<Mat> svd(points, Eigen::ComputeFullU);
  Vec sigma = Vec::Zero(d);
  sigma.head(svd.singularValues().size()) = svd.singularValues();
  Vec lambda(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double floor = k == 0 ? params.alpha : params.beta;
    lambda[k] = std::max(static_cast<double>(d) / n * sigma[k] * sigma[k], floor);
  }
  return Ellipsoid(svd.matrixU(), lambda, Vec::Zero(d));
}

}  // namespace

Ellipsoid fit_offcentered(const Mat& points, const EllipsoidFitParams& params) {
  check_fit_inputs(points, params);
  const auto d = points.rows();
  const double n = static_cast<double>(points.cols());
  const Vec c = points.rowwise().mean();
  const double cn = c.norm();
  if (cn < 1e-12) return fit_zero_mean(points, params);

  const MeanFrame f = mean_frame(points, c);
  const Vec u = f.frame.col(0);
  const double spread = ((u.transpose() * points).array() - u.dot(c)).square().sum();
  Vec lambda(d);
  // The alpha |c|^2 floor keeps c^T Q^{-1} c = |c|^2 / lambda_1 <= 1/alpha < 1.
  lambda[0] = std::max({static_cast<double>(d) / n * spread, params.alpha, params.alpha * cn * cn});
  for (Eigen::Index k = 1; k < d; ++k) {
    lambda[k] = std::max(static_cast<double>(d) / n * f.sigma[k - 1] * f.sigma[k - 1], params.beta);
  }
  return Ellipsoid(f.frame, lambda, c);
}

Ellipsoid fit_centered(const Mat& points, const EllipsoidFitParams& params) {
  check_fit_inputs(points, params);
  const auto d = points.rows();
  const double n = static_cast<double>(points.cols());
  const Vec c = points.rowwise().mean();
  if (c.norm() < 1e-12) return fit_zero_mean(points, params);

  const MeanFrame f = mean_frame(points, c);
  const Vec u = f.frame.col(0);
  const double spread = (u.transpose() * points).array().square().sum();
  Vec lambda(d);
  lambda[0] = std::max(static_cast<double>(d) / n * spread, params.alpha);
  for (Eigen::Index k = 1; k < d; ++k) {
    lambda[k] = std::max(static_cast<double>(d) / n * f.sigma[k - 1] * f.sigma[k - 1], params.beta);
  }
  return Ellipsoid(f.frame, lambda, Vec::Zero(d));
}

}  // namespace starflow
