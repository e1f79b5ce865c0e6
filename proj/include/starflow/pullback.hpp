#pragma once

#include <functional>
#include <span>
#include <vector>

#include "starflow/diffeo.hpp"

namespace starflow {

/// Curve on [0,1]. eval(0) and eval(1) return the stored endpoints exactly.
class Curve {
 public:
  using Fn = std::function<Vec(double)>;

  Curve(Vec x, Vec y, Fn fn) : x_(std::move(x)), y_(std::move(y)), fn_(std::move(fn)) {}

  Vec eval(double t) const {
    if (t <= 0.0) return x_;
    if (t >= 1.0) return y_;
    return fn_(t);
  }
  /// Rows are eval(k / (frames - 1)).
  Mat sample(int frames) const;

  const Vec& start() const { return x_; }
  const Vec& end() const { return y_; }

 private:
  Vec x_, y_;
  Fn fn_;
};

/// Polygonal approximation of a curve on uniform knots.
struct PiecewiseArc {
  std::vector<double> knots;       // t_0 = 0 < ... < t_{m-1} = 1
  std::vector<double> cumulative;  // L_0 = 0 <= ... <= L_{m-1}

  double total() const { return cumulative.back(); }
  /// Knot time at which the polygon reaches fraction u in [0,1] of its length.
  double time_at_fraction(double u) const;
};

inline constexpr int kDefaultArcSamples = 256;

double pullback_distance(const Diffeo& phi, const Vec& x, const Vec& y);
Curve pullback_geodesic(DiffeoPtr phi, const Vec& x, const Vec& y);
Vec pullback_exp(const Diffeo& phi, const Vec& x, const Vec& v);
Vec pullback_log(const Diffeo& phi, const Vec& x, const Vec& y);
Vec pullback_transport(const Diffeo& phi, const Vec& x, const Vec& y, const Vec& v);

/// phi^{-1}(sum_i w_i phi(x_i)); empty weights mean uniform.
Vec pullback_barycentre(const Diffeo& phi, std::span<const Vec> points,
                        std::span<const double> weights = {});

PiecewiseArc arc_length(const Curve& curve, int m);

/// Pullback geodesic reparametrized to (approximately) constant l2 speed.
Curve iso_geodesic(DiffeoPtr phi, const Vec& x, const Vec& y, int m = kDefaultArcSamples);

/// |log_x(y)|_2 / l2 length of the geodesic from x to y; 1 when x == y.
double iso_log_scale(DiffeoPtr phi, const Vec& x, const Vec& y, int m = kDefaultArcSamples);

}  // namespace starflow
