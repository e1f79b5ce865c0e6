#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "starflow/diffeo.hpp"
#include "starflow/pullback.hpp"

namespace sftest {

using starflow::Mat;
using starflow::Vec;

inline Vec randn(std::mt19937_64& rng, int d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

inline Vec unit(std::mt19937_64& rng, int d) {
  Vec v = randn(rng, d);
  return v / v.norm();
}

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

/// Central difference of f along v.
template <class F>
Vec central_diff(F&& f, const Vec& x, const Vec& v, double h = 1e-5) {
  return (f(x + h * v) - f(x - h * v)) / (2.0 * h);
}

inline double rel_err(const Vec& a, const Vec& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

/// Coefficient of variation of consecutive chord lengths of `frames` rows.
inline double chord_cv(const Mat& frames) {
  const auto n = frames.rows() - 1;
  Vec len(n);
  for (Eigen::Index k = 0; k < n; ++k) len[k] = (frames.row(k + 1) - frames.row(k)).norm();
  const double mean = len.mean();
  return std::sqrt((len.array() - mean).square().mean()) / mean;
}

inline double chord_ratio(const Mat& frames) {
  double lo = INFINITY, hi = 0.0;
  for (Eigen::Index k = 0; k + 1 < frames.rows(); ++k) {
    const double l = (frames.row(k + 1) - frames.row(k)).norm();
    lo = std::min(lo, l);
    hi = std::max(hi, l);
  }
  return hi / lo;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("starflow_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Coordinate-wise cube, x -> x^3, with default finite-difference differentials.
class CubeMap final : public starflow::Diffeo {
 public:
  explicit CubeMap(int d) : d_(d) {}
  int dim() const override { return d_; }
  Vec forward(const Vec& x) const override { return x.array().cube().matrix(); }
  Vec inverse(const Vec& y) const override { return y.unaryExpr([](double t) { return std::cbrt(t); }); }

 private:
  int d_;
};

}  // namespace sftest
