#include "starflow/pullback.hpp"

#include <algorithm>
#include <cmath>

namespace starflow {

namespace {

void check_pair(const Diffeo& phi, const Vec& x, const Vec& y, const char* what) {
  require_dim(x.size(), phi.dim(), what);
  require_dim(y.size(), phi.dim(), what);
}

}  // namespace

Mat Curve::sample(int frames) const {
  if (frames < 2) throw Error(ErrorCode::invalid_argument, "curve sample: need at least 2 frames");
  Mat out(frames, x_.size());
  for (int k = 0; k < frames; ++k) {
    out.row(k) = eval(static_cast<double>(k) / (frames - 1)).transpose();
  }
  return out;
}

double PiecewiseArc::time_at_fraction(double u) const {
  const double len = total();
  if (len <= 0.0) return u;
  const double target = std::clamp(u, 0.0, 1.0) * len;
  auto it = std::lower_bound(cumulative.begin(), cumulative.end(), target);
  if (it == cumulative.begin()) return knots.front();
  if (it == cumulative.end()) return knots.back();
  const auto i = static_cast<std::size_t>(it - cumulative.begin());
  const double l0 = cumulative[i - 1];
  const double l1 = cumulative[i];
  if (l1 <= l0) return knots[i];
  const double a = (target - l0) / (l1 - l0);
  return knots[i - 1] + a * (knots[i] - knots[i - 1]);
}

double pullback_distance(const Diffeo& phi, const Vec& x, const Vec& y) {
  check_pair(phi, x, y, "pullback_distance");
  return (phi.forward(x) - phi.forward(y)).norm();
}

Curve pullback_geodesic(DiffeoPtr phi, const Vec& x, const Vec& y) {
  check_pair(*phi, x, y, "pullback_geodesic");
  Vec fx = phi->forward(x);
  Vec fy = phi->forward(y);
  return Curve(x, y, [phi, fx = std::move(fx), fy = std::move(fy)](double t) {
    return phi->inverse((1.0 - t) * fx + t * fy);
  });
}

Vec pullback_exp(const Diffeo& phi, const Vec& x, const Vec& v) {
  check_pair(phi, x, v, "pullback_exp");
  return phi.inverse(phi.forward(x) + phi.jvp(x, v));
}

Vec pullback_log(const Diffeo& phi, const Vec& x, const Vec& y) {
  check_pair(phi, x, y, "pullback_log");
  const Vec fx = phi.forward(x);
  return phi.inverse_jvp(fx, phi.forward(y) - fx);
}

Vec pullback_transport(const Diffeo& phi, const Vec& x, const Vec& y, const Vec& v) {
  check_pair(phi, x, y, "pullback_transport");
  require_dim(v.size(), phi.dim(), "pullback_transport");
  return phi.inverse_jvp(phi.forward(y), phi.jvp(x, v));
}

Vec pullback_barycentre(const Diffeo& phi, std::span<const Vec> points,
                        std::span<const double> weights) {
  if (points.empty()) throw Error(ErrorCode::invalid_argument, "pullback_barycentre: empty point list");
  if (!weights.empty() && weights.size() != points.size()) {
    throw Error(ErrorCode::dimension_mismatch, "pullback_barycentre: weight count mismatch");
  }
  Vec acc = Vec::Zero(phi.dim());
  const double uniform = 1.0 / static_cast<double>(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    require_dim(points[i].size(), phi.dim(), "pullback_barycentre");
    acc += (weights.empty() ? uniform : weights[i]) * phi.forward(points[i]);
  }
  return phi.inverse(acc);
}

PiecewiseArc arc_length(const Curve& curve, int m) {
  if (m < 2) throw Error(ErrorCode::invalid_argument, "arc_length: need m >= 2");
  PiecewiseArc arc;
  arc.knots.resize(m);
  arc.cumulative.resize(m);
  Vec prev = curve.eval(0.0);
  arc.knots[0] = 0.0;
  arc.cumulative[0] = 0.0;
  for (int k = 1; k < m; ++k) {
    const double t = (k == m - 1) ? 1.0 : static_cast<double>(k) / (m - 1);
    Vec cur = curve.eval(t);
    arc.knots[k] = t;
    arc.cumulative[k] = arc.cumulative[k - 1] + (cur - prev).norm();
    prev = std::move(cur);
  }
  return arc;
}

Curve iso_geodesic(DiffeoPtr phi, const Vec& x, const Vec& y, int m) {
  check_pair(*phi, x, y, "iso_geodesic");
  if (x == y) {
    return Curve(x, y, [x](double) { return x; });
  }
  Curve base = pullback_geodesic(phi, x, y);
  PiecewiseArc arc = arc_length(base, m);
  return Curve(x, y, [base = std::move(base), arc = std::move(arc)](double t) {
    return base.eval(arc.time_at_fraction(t));
  });
}

double iso_log_scale(DiffeoPtr phi, const Vec& x, const Vec& y, int m) {
  check_pair(*phi, x, y, "iso_log_scale");
  if (x == y) return 1.0;
  const double len = arc_length(pullback_geodesic(phi, x, y), m).total();
  if (!(len > 0.0)) return 1.0;
  return pullback_log(*phi, x, y).norm() / len;
}

}  // namespace starflow
