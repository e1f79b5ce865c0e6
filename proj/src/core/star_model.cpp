#include "starflow/star_model.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace starflow {

double log_sphere_area(int d) {
  return std::log(2.0) + 0.5 * d * std::log(std::numbers::pi) - std::lgamma(0.5 * d);
}

namespace {

Vec uniform_direction(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vec g(d);
  double n = 0.0;
  while (n < 1e-12) {
    for (int i = 0; i < d; ++i) g[i] = normal(rng);
    n = g.norm();
  }
  return g / n;
}

}  // namespace

double star_normalizer(const RadialFn& rho, const NormalizerOptions& opts) {
  const int d = rho.dim();
  if (d < 2) throw Error(ErrorCode::invalid_argument, "star_normalizer: need d >= 2");
  if (d > kMaxNormalizedDim && !opts.allow_high_dim) {
    throw Error(ErrorCode::unsupported,
                "star_normalizer: sphere integral of rho^d is unstable for d > 8; use unnormalized densities");
  }
  if (d == 2) {
    const int m = kQuadratureNodes2d;
    double acc = 0.0;
    Vec s(2);
    for (int k = 0; k < m; ++k) {
      const double th = 2.0 * std::numbers::pi * k / m;
      s << std::cos(th), std::sin(th);
      acc += rho.eval(s) * rho.eval(s);
    }
    return acc * 2.0 * std::numbers::pi / m;
  }
  if (opts.n_samples < 1) throw Error(ErrorCode::invalid_argument, "star_normalizer: n_samples must be positive");
  std::mt19937_64 rng(opts.seed);
  double acc = 0.0;
  for (int i = 0; i < opts.n_samples; ++i) acc += std::pow(rho.eval(uniform_direction(d, rng)), d);
  return std::exp(log_sphere_area(d)) * acc / opts.n_samples;
}

StarModel::StarModel(DiffeoPtr phi_a, RadialPtr rho, WarpPtr warp, const NormalizerOptions& opts)
    : phi_a_(std::move(phi_a)), rho_(std::move(rho)), warp_(std::move(warp)) {
  if (!phi_a_ || !rho_) throw Error(ErrorCode::invalid_argument, "star model: base map and radial are required");
  d_ = phi_a_->dim();
  require_dim(rho_->dim(), d_, "star model radial");
  const LogDet ld = phi_a_->log_det(Vec::Zero(d_));
  if (!ld.constant) throw Error(ErrorCode::invalid_argument, "star model: base map must have constant Jacobian determinant");
  base_log_det_ = ld.value;
  if (d_ >= 2 && d_ <= kMaxNormalizedDim) {
    log_normalizer_ = std::log(star_normalizer(*rho_, opts));
  } else if (d_ > kMaxNormalizedDim && opts.allow_high_dim) {
    log_normalizer_ = std::log(star_normalizer(*rho_, opts));
  }

  std::vector<DiffeoPtr> parts{phi_a_, std::make_shared<RadialScaling>(rho_)};
  if (warp_) parts.push_back(std::make_shared<NormWarp>(d_, warp_));
  composite_ = compose(std::move(parts));
}

double StarModel::log_normalizer() const {
  if (!log_normalizer_) {
    throw Error(ErrorCode::unsupported, "star model: normalizer unavailable in dimension " + std::to_string(d_));
  }
  return *log_normalizer_;
}

double StarModel::log_density(const Vec& x, bool normalized) const {
  require_dim(x.size(), d_, "log_density");
  const Vec z = phi_a_->forward(x);
  const double r = z.norm();
  double quad = 0.0;
  if (r > 0.0) {
    const double rho = rho_->eval(z / r);
    quad = 0.5 * r * r / (rho * rho);
  }
  const double log_c = (0.5 * d_ - 1.0) * std::log(2.0) + std::lgamma(0.5 * d_);
  double lp = -quad + base_log_det_ - log_c;
  if (normalized) lp -= log_normalizer();
  return lp;
}

Mat sample_star(const StarModel& model, int n, std::uint64_t seed) {
  if (n < 0) throw Error(ErrorCode::invalid_argument, "sample_star: negative sample count");
  const int d = model.dim();
  const RadialFn& rho = *model.radial();
  const double rmax = rho.rho_max();
  if (!(rmax > 0.0) || !std::isfinite(rmax)) throw Error(ErrorCode::invalid_argument, "sample_star: rho_max must be finite");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  Mat out(n, d);
  long long attempts = 0, accepted = 0;
  for (int i = 0; i < n; ++i) {
    Vec s;
    for (;;) {
      s = uniform_direction(d, rng);
      ++attempts;
      const double ratio = std::pow(rho.eval(s) / rmax, d);
      if (ratio > 1.0 + 1e-9) throw Error(ErrorCode::numerical, "sample_star: rho exceeds its declared rho_max");
      if (unif(rng) < ratio) break;
      if (attempts >= 100000 && static_cast<double>(accepted) / attempts < 1e-4) {
        throw Error(ErrorCode::numerical, "sample_star: rejection acceptance below 1e-4 (" +
                                              std::to_string(accepted) + "/" + std::to_string(attempts) + ")");
      }
    }
    ++accepted;
    double chi2 = 0.0;
    for (int k = 0; k < d; ++k) {
      const double g = normal(rng);
      chi2 += g * g;
    }
    const Vec z = rho.eval(s) * std::sqrt(chi2) * s;
    out.row(i) = model.base()->inverse(z).transpose();
  }
  return out;
}

}  // namespace starflow
