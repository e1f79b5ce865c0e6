#pragma once

#include <cstdint>
#include <optional>

#include "starflow/radial.hpp"

namespace starflow {

inline constexpr int kMaxNormalizedDim = 8;
inline constexpr int kQuadratureNodes2d = 4096;
inline constexpr int kMonteCarloSamples = 1 << 16;

/// log sigma(S^{d-1}) = log(2 pi^{d/2} / Gamma(d/2))
double log_sphere_area(int d);

struct NormalizerOptions {
  int n_samples = kMonteCarloSamples;
  std::uint64_t seed = 0x5eed;
  bool allow_high_dim = false;
};

/// Estimate of the integral of rho(s)^d over the unit sphere. Exact trapezoid
/// rule in d = 2, Monte Carlo for d >= 3. Refuses d > 8 unless allowed.
double star_normalizer(const RadialFn& rho, const NormalizerOptions& opts = {});

/// Deformed star distribution with base map phi_A, radial rho and warp nu.
class StarModel {
 public:
  /// `warp` may be null (no warp). phi_A must report a constant log-det.
  StarModel(DiffeoPtr phi_a, RadialPtr rho, WarpPtr warp, const NormalizerOptions& opts = {});

  int dim() const { return d_; }
  const DiffeoPtr& base() const { return phi_a_; }
  const RadialPtr& radial() const { return rho_; }
  const WarpPtr& warp() const { return warp_; }

  bool has_normalizer() const { return log_normalizer_.has_value(); }
  /// log of the sphere integral of rho^d; throws when unavailable.
  double log_normalizer() const;

  /// log p(x). With normalized = false the sphere-integral term is omitted.
  double log_density(const Vec& x, bool normalized = true) const;

  /// phi = nu_nu o S_rho o phi_A (nu_nu omitted when there is no warp).
  DiffeoPtr composite() const { return composite_; }

 private:
  int d_;
  DiffeoPtr phi_a_;
  RadialPtr rho_;
  WarpPtr warp_;
  double base_log_det_;
  std::optional<double> log_normalizer_;
  DiffeoPtr composite_;
};

/// n x d samples: angular part by rejection against (rho_max / rho)^d,
/// radius rho(s) * chi_d, then mapped through phi_A^{-1}.
Mat sample_star(const StarModel& model, int n, std::uint64_t seed);

}  // namespace starflow
