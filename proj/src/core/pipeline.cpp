#include "starflow/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "starflow/pullback.hpp"

namespace starflow {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute() || base_dir.empty()) return p;
  return (fs::path(base_dir) / p).string();
}

template <class F>
auto stage(const char* name, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("[") + name + "] " + e.what());
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.arch.seed = seed;
  cfg.train_cfg.seed = seed + 1;
  cfg.aa.seed = seed + 2;
}

RunConfig parse_config_json(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("config: ") + e.what());
  }
  RunConfig cfg;
  try {
    if (j.contains("data")) {
      const json& d = j["data"];
      cfg.data_path = resolve(base_dir, d.value("path", std::string{}));
      const auto format = d.value("format", std::string("auto"));
      if (format == "csv") cfg.format = DataFormat::csv;
      else if (format == "sfam") cfg.format = DataFormat::sfam;
      else if (format == "auto") cfg.format = DataFormat::detect;
      else throw Error(ErrorCode::format, "config: unknown data format '" + format + "'");
      if (d.contains("header")) cfg.csv.header = d["header"].get<bool>();
      cfg.csv.label_column = d.value("label_column", -1);
    }
    const auto mode = j.value("mode", std::string("unlabeled"));
    if (mode == "unlabeled") cfg.mode = FitMode::unlabeled;
    else if (mode == "labeled") cfg.mode = FitMode::labeled;
    else throw Error(ErrorCode::format, "config: mode must be 'unlabeled' or 'labeled'");
    cfg.k = j.value("k", cfg.k);
    apply_seed(cfg, j.value("seed", std::uint64_t{0}));
    if (j.contains("flow")) {
      const json& f = j["flow"];
      cfg.train = f.value("train", cfg.train);
      cfg.arch.blocks = f.value("blocks", cfg.arch.blocks);
      cfg.arch.hidden = f.value("hidden", cfg.arch.hidden);
      cfg.arch.permute = f.value("permute", cfg.arch.permute);
      cfg.train_cfg.learning_rate = f.value("learning_rate", cfg.train_cfg.learning_rate);
      cfg.train_cfg.batch_size = f.value("batch_size", cfg.train_cfg.batch_size);
      cfg.train_cfg.epochs = f.value("epochs", cfg.train_cfg.epochs);
      cfg.train_cfg.beta1 = f.value("beta1", cfg.train_cfg.beta1);
      cfg.train_cfg.beta2 = f.value("beta2", cfg.train_cfg.beta2);
      cfg.train_cfg.eps = f.value("eps", cfg.train_cfg.eps);
      cfg.train_cfg.clip_norm = f.value("clip_norm", cfg.train_cfg.clip_norm);
    }
    if (j.contains("radial")) {
      const json& r = j["radial"];
      cfg.radial.alpha = r.value("alpha", cfg.radial.alpha);
      cfg.radial.beta = r.value("beta", cfg.radial.beta);
      cfg.t_min = r.value("t_min", cfg.t_min);
      cfg.t_max = r.value("t_max", cfg.t_max);
    }
    if (j.contains("warp")) cfg.warp_a = j["warp"].value("a", cfg.warp_a);
    if (j.contains("aa")) {
      const json& a = j["aa"];
      cfg.aa.max_outer = a.value("max_outer", cfg.aa.max_outer);
      cfg.aa.inner_steps = a.value("inner_steps", cfg.aa.inner_steps);
      cfg.aa.rel_tol = a.value("rel_tol", cfg.aa.rel_tol);
    }
    cfg.out_dir = resolve(base_dir, j.value("out", cfg.out_dir));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::io, "config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_json(ss.str(), fs::path(path).parent_path().string());
}

void validate(const RunConfig& cfg) {
  if (!(cfg.radial.alpha > 1.0)) throw Error(ErrorCode::invalid_argument, "config: radial alpha must exceed 1");
  if (!(cfg.radial.beta > 0.0 && cfg.radial.beta < cfg.radial.alpha)) {
    throw Error(ErrorCode::invalid_argument, "config: radial beta must lie in (0, alpha)");
  }
  if (!(cfg.t_min > 0.0) || !(cfg.t_max > 0.0)) throw Error(ErrorCode::invalid_argument, "config: temperatures must be positive");
  if (cfg.k < 1) throw Error(ErrorCode::invalid_argument, "config: k must be at least 1");
  if (cfg.warp_a < 0.0) throw Error(ErrorCode::invalid_argument, "config: warp a must be non-negative");
  if (cfg.aa.max_outer < 1 || cfg.aa.inner_steps < 1) throw Error(ErrorCode::invalid_argument, "config: bad aa iteration counts");
  if (cfg.train) {
    validate(cfg.train_cfg);
    if (cfg.arch.blocks < 0 || cfg.arch.hidden < 1) throw Error(ErrorCode::invalid_argument, "config: bad flow architecture");
  }
  if (cfg.data_path.empty()) throw Error(ErrorCode::invalid_argument, "config: data.path is required");
  if (!fs::exists(cfg.data_path)) throw Error(ErrorCode::io, "config: data file not found: " + cfg.data_path);
  if (cfg.mode == FitMode::labeled && cfg.csv.label_column < 0) {
    throw Error(ErrorCode::invalid_argument, "config: labeled mode needs data.label_column");
  }
}

FitResult three_step_fit(const RunConfig& cfg, const Dataset& data) {
  const int d = static_cast<int>(data.x.cols());
  const auto n = data.x.rows();
  FitResult out;

  DiffeoPtr phi_a = stage("flow", [&]() -> DiffeoPtr {
    if (!cfg.train) return std::make_shared<IdentityDiffeo>(d);
    TrainResult tr = train_flow(data.x, cfg.arch, cfg.train_cfg);
    out.initial_nll = tr.initial_nll;
    out.loss_history = tr.history;
    return std::make_shared<CouplingFlow>(std::move(tr.flow));
  });

  Mat latent(d, n);
  if (const auto* flow = dynamic_cast<const CouplingFlow*>(phi_a.get())) {
    latent = flow->forward_batch(data.x.transpose());
  } else {
    latent = data.x.transpose();
  }

  // Step 2: archetypes, branch labels per point, and class labels per archetype.
  Mat latent_archetypes(d, 0);
  std::vector<int> branch_of_point;
  int branches = 0;
  stage("archetypes", [&] {
    if (cfg.mode == FitMode::unlabeled) {
      const AAFactors f = aa_fit(latent, cfg.k, cfg.aa);
      out.aa_objectives.push_back(f.objective);
      latent_archetypes = latent * f.b;
      branch_of_point = assign_labels(f.a);
      for (int j = 0; j < cfg.k; ++j) out.bundle.archetype_labels.push_back(j);
      branches = cfg.k;
    } else {
      if (data.labels.empty()) throw Error(ErrorCode::invalid_argument, "labeled mode requires point labels");
      branches = data.classes();
      branch_of_point = data.labels;
      latent_archetypes.resize(d, static_cast<Eigen::Index>(branches) * cfg.k);
      for (int c = 0; c < branches; ++c) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (data.labels[i] == c) idx.push_back(i);
        }
        const Mat yc = latent(Eigen::all, idx);
        const AAFactors f = aa_fit(yc, cfg.k, cfg.aa);
        out.aa_objectives.push_back(f.objective);
        latent_archetypes.middleCols(static_cast<Eigen::Index>(c) * cfg.k, cfg.k) = yc * f.b;
        for (int j = 0; j < cfg.k; ++j) out.bundle.archetype_labels.push_back(c);
      }
    }
    return 0;
  });
  out.point_labels = branch_of_point;

  // Step 3: one soft ellipsoid intersection per branch.
  auto radial = stage("radial", [&] {
    std::vector<BranchRadial> parts;
    for (int j = 0; j < branches; ++j) {
      std::vector<Eigen::Index> idx;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (branch_of_point[i] == j) idx.push_back(i);
      }
      if (idx.empty()) {
        throw Error(ErrorCode::numerical, "branch " + std::to_string(j) +
                                              " received no points; reduce k or change the aa seed");
      }
      const Mat pts = latent(Eigen::all, idx);
      parts.emplace_back(fit_offcentered(pts, cfg.radial), fit_centered(pts, cfg.radial), cfg.t_min);
    }
    return std::make_shared<StarRadial>(std::move(parts), cfg.t_max);
  });

  WarpPtr warp;
  if (cfg.warp_a > 0.0) warp = std::make_shared<LogWarp>(cfg.warp_a);
  out.bundle.model = stage("model", [&] { return std::make_shared<StarModel>(phi_a, radial, warp); });
  out.bundle.archetypes.resize(d, latent_archetypes.cols());
  for (Eigen::Index j = 0; j < latent_archetypes.cols(); ++j) {
    out.bundle.archetypes.col(j) = phi_a->inverse(latent_archetypes.col(j));
  }
  return out;
}

void write_fit_outputs(const std::string& out_dir, const FitResult& fit) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create output directory " + out_dir + ": " + ec.message());
  const fs::path dir(out_dir);
  save_model((dir / "model.json").string(), fit.bundle);
  const Mat rows = fit.bundle.archetypes.transpose();
  save_sfam((dir / "archetypes.sfam").string(), rows);
  save_csv((dir / "archetypes.csv").string(), rows);

  auto write_ints = [&](const char* name, const std::vector<int>& v) {
    std::ofstream os(dir / name);
    os << "label\n";
    for (int x : v) os << x << '\n';
    if (!os) throw Error(ErrorCode::io, std::string("cannot write ") + name);
  };
  write_ints("archetype_labels.csv", fit.bundle.archetype_labels);
  write_ints("labels.csv", fit.point_labels);

  std::ofstream os(dir / "loss_history.csv");
  os << "epoch,nll\n";
  if (!fit.loss_history.empty()) os << 0 << ',' << fmt(fit.initial_nll) << '\n';
  for (std::size_t e = 0; e < fit.loss_history.size(); ++e) os << e + 1 << ',' << fmt(fit.loss_history[e]) << '\n';
  if (!os) throw Error(ErrorCode::io, "cannot write loss_history.csv");
}

Mat geodesic_frames(const StarModel& model, const Vec& x, const Vec& y, int frames, bool iso) {
  if (frames < 2) throw Error(ErrorCode::invalid_argument, "geodesic: need at least 2 frames");
  const DiffeoPtr phi = model.composite();
  const Curve c = iso ? iso_geodesic(phi, x, y) : pullback_geodesic(phi, x, y);
  return c.sample(frames);
}

GridSpec parse_grid(const std::string& text) {
  auto axis = [&](const std::string& part, double& lo, double& hi, int& count) {
    double a, b;
    int c;
    char s1, s2;
    std::istringstream ss(part);
    if (!(ss >> a >> s1 >> b >> s2 >> c) || s1 != ':' || s2 != ':' || !(ss >> std::ws).eof() || c < 2 || !(b > a)) {
      throw Error(ErrorCode::invalid_argument, "grid: expected lo:hi:n with lo < hi and n >= 2, got '" + part + "'");
    }
    lo = a;
    hi = b;
    count = c;
  };
  GridSpec g;
  const auto comma = text.find(',');
  axis(text.substr(0, comma), g.xmin, g.xmax, g.nx);
  if (comma == std::string::npos) {
    g.ymin = g.xmin;
    g.ymax = g.xmax;
    g.ny = g.nx;
  } else {
    axis(text.substr(comma + 1), g.ymin, g.ymax, g.ny);
  }
  return g;
}

Mat density_grid(const StarModel& model, const GridSpec& grid) {
  if (model.dim() != 2) throw Error(ErrorCode::unsupported, "density grid: model must be two-dimensional");
  if (grid.nx < 2 || grid.ny < 2) throw Error(ErrorCode::invalid_argument, "density grid: need at least 2 nodes per axis");
  Mat out(static_cast<Eigen::Index>(grid.nx) * grid.ny, 3);
  Eigen::Index row = 0;
  for (int iy = 0; iy < grid.ny; ++iy) {
    const double y = grid.ymin + (grid.ymax - grid.ymin) * iy / (grid.ny - 1);
    for (int ix = 0; ix < grid.nx; ++ix) {
      const double x = grid.xmin + (grid.xmax - grid.xmin) * ix / (grid.nx - 1);
      out.row(row++) << x, y, model.log_density(Eigen::Vector2d(x, y));
    }
  }
  return out;
}

ArchetypeSet archetype_set(const ModelBundle& bundle) {
  if (bundle.archetypes.cols() == 0) throw Error(ErrorCode::invalid_argument, "model has no archetypes");
  return ArchetypeSet(*bundle.model->composite(), bundle.archetypes, bundle.archetype_labels);
}

namespace {

std::vector<int> effective_labels(const std::vector<int>& labels, Eigen::Index k) {
  if (!labels.empty()) return labels;
  std::vector<int> out(k);
  for (Eigen::Index j = 0; j < k; ++j) out[j] = static_cast<int>(j);
  return out;
}

}  // namespace

void write_ram_csv(const std::string& path, const std::vector<RamResult>& results, const std::vector<int>& labels) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io, "cannot open " + path);
  const Eigen::Index k = results.empty() ? static_cast<Eigen::Index>(labels.size()) : results.front().weights.size();
  const auto lab = effective_labels(labels, k);
  os << "index,class";
  for (Eigen::Index j = 0; j < k; ++j) os << ",lambda_" << j;
  for (Eigen::Index j = 0; j < k; ++j) os << ",iso_lambda_" << j;
  os << ",reconstruction_error,iterations,converged,iso_class,relaxed_error,relaxed_iterations,step_underflow\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const RamResult& r = results[i];
    os << i << ',' << classify_aggregate(r.weights, lab).argmax;
    for (Eigen::Index j = 0; j < k; ++j) os << ',' << fmt(r.weights[j]);
    for (Eigen::Index j = 0; j < k; ++j) os << ',' << fmt(r.iso_weights[j]);
    os << ',' << fmt(r.reconstruction_error) << ',' << r.refine_iterations << ',' << (r.converged ? 1 : 0) << ','
       << classify_aggregate(r.iso_weights, lab).argmax << ',' << fmt(r.relaxed_error) << ','
       << r.relaxed_iterations << ',' << (r.step_underflow ? 1 : 0) << '\n';
  }
  if (!os) throw Error(ErrorCode::io, "write failed for " + path);
}

void write_class_csv(const std::string& path, const std::vector<RamResult>& results, const std::vector<int>& labels) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io, "cannot open " + path);
  const Eigen::Index k = results.empty() ? static_cast<Eigen::Index>(labels.size()) : results.front().weights.size();
  const auto lab = effective_labels(labels, k);
  const int classes = *std::max_element(lab.begin(), lab.end()) + 1;
  os << "index,class,iso_class";
  for (int c = 0; c < classes; ++c) os << ",mass_" << c;
  for (int c = 0; c < classes; ++c) os << ",iso_mass_" << c;
  os << '\n';
  for (std::size_t i = 0; i < results.size(); ++i) {
    const ClassMass raw = classify_aggregate(results[i].weights, lab);
    const ClassMass iso = classify_aggregate(results[i].iso_weights, lab);
    os << i << ',' << raw.argmax << ',' << iso.argmax;
    for (double m : raw.masses) os << ',' << fmt(m);
    for (double m : iso.masses) os << ',' << fmt(m);
    os << '\n';
  }
  if (!os) throw Error(ErrorCode::io, "write failed for " + path);
}

std::vector<CheckItem> run_checks(const ModelBundle& bundle, std::uint64_t seed) {
  std::vector<CheckItem> items;
  if (!bundle.model) return {{"model_present", false, "no model loaded"}};
  const StarModel& model = *bundle.model;
  const int d = model.dim();
  const DiffeoPtr phi = model.composite();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Mat probe;
  if (model.has_normalizer()) {
    probe = sample_star(model, 1000, seed + 11);
  } else {
    probe.resize(1000, d);
    for (Eigen::Index i = 0; i < probe.size(); ++i) probe.data()[i] = normal(rng);
  }

  auto run = [&](const std::string& name, auto&& fn) {
    CheckItem item{name, false, {}};
    try {
      fn(item);
    } catch (const std::exception& e) {
      item.passed = false;
      item.detail = std::string("exception: ") + e.what();
    }
    items.push_back(std::move(item));
  };

  run("composite_round_trip", [&](CheckItem& it) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < probe.rows(); ++i) {
      const Vec x = probe.row(i).transpose();
      worst = std::max(worst, (phi->inverse(phi->forward(x)) - x).norm() / (1.0 + x.norm()));
    }
    it.passed = worst <= 1e-8;
    it.detail = "max relative round trip " + fmt(worst);
  });

  run("composite_jvp", [&](CheckItem& it) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < 100; ++i) {
      const Vec x = probe.row(i).transpose();
      Vec v(d);
      for (int k = 0; k < d; ++k) v[k] = normal(rng);
      const double h = 1e-5 * (1.0 + x.norm());
      const Vec fd = (phi->forward(x + h * v) - phi->forward(x - h * v)) / (2.0 * h);
      const Vec an = phi->jvp(x, v);
      worst = std::max(worst, (fd - an).norm() / std::max(1.0, an.norm()));
    }
    it.passed = worst <= 1e-4;
    it.detail = "max jvp deviation " + fmt(worst);
  });

  run("base_log_det_constant", [&](CheckItem& it) {
    const LogDet ref = model.base()->log_det(probe.row(0).transpose());
    double worst = 0.0;
    for (Eigen::Index i = 1; i < probe.rows(); ++i) {
      worst = std::max(worst, std::abs(model.base()->log_det(probe.row(i).transpose()).value - ref.value));
    }
    it.passed = ref.constant && worst <= 1e-12;
    it.detail = "log det " + fmt(ref.value) + ", spread " + fmt(worst);
  });

  run("radial_bounds", [&](CheckItem& it) {
    const RadialFn& rho = *model.radial();
    int bad = 0;
    for (int i = 0; i < 2000; ++i) {
      Vec s(d);
      for (int k = 0; k < d; ++k) s[k] = normal(rng);
      s.normalize();
      const double r = rho.eval(s);
      if (!(r >= rho.rho_min() * (1 - 1e-12) && r <= rho.rho_max() * (1 + 1e-12))) ++bad;
    }
    it.passed = bad == 0;
    it.detail = std::to_string(bad) + " of 2000 directions outside [" + fmt(rho.rho_min()) + ", " + fmt(rho.rho_max()) + "]";
  });

  run("branch_ellipsoids", [&](CheckItem& it) {
    const auto* star = dynamic_cast<const StarRadial*>(model.radial().get());
    if (!star) {
      it.passed = true;
      it.detail = "radial function has no branches";
      return;
    }
    double worst = 0.0;
    for (const auto& b : star->branches()) {
      worst = std::max({worst, b.offcentered().center_form(), b.centered().center_form()});
    }
    it.passed = worst < 1.0;
    it.detail = std::to_string(star->branches().size()) + " branches, max c^T Q^-1 c " + fmt(worst);
  });

  run("density_finite", [&](CheckItem& it) {
    if (!model.has_normalizer()) {
      it.passed = true;
      it.detail = "normalizer unavailable in dimension " + std::to_string(d) + "; skipped";
      return;
    }
    bool ok = std::isfinite(model.log_normalizer());
    for (Eigen::Index i = 0; i < probe.rows() && ok; ++i) ok = std::isfinite(model.log_density(probe.row(i).transpose()));
    it.passed = ok;
    it.detail = "log normalizer " + fmt(model.log_normalizer());
  });

  run("geodesic_likelihood_convexity", [&](CheckItem& it) {
    if (!model.warp()) {
      it.passed = true;
      it.detail = "no warp; skipped";
      return;
    }
    double worst = std::numeric_limits<double>::infinity();
    constexpr int knots = 65;
    for (int p = 0; p < 20; ++p) {
      const Vec x = probe.row(2 * p).transpose();
      const Vec y = probe.row(2 * p + 1).transpose();
      const Curve c = pullback_geodesic(phi, x, y);
      std::vector<double> f(knots);
      double scale = 1.0;
      for (int k = 0; k < knots; ++k) {
        f[k] = -model.log_density(c.eval(static_cast<double>(k) / (knots - 1)), false);
        scale = std::max(scale, std::abs(f[k]));
      }
      for (int k = 1; k + 1 < knots; ++k) worst = std::min(worst, (f[k - 1] - 2 * f[k] + f[k + 1]) / scale);
    }
    it.passed = worst > -1e-9;
    it.detail = "min scaled second difference " + fmt(worst);
  });

  if (bundle.archetypes.cols() > 0) {
    run("archetype_identity", [&](CheckItem& it) {
      const ArchetypeSet z = archetype_set(bundle);
      double worst = 0.0;
      for (int j = 0; j < z.count(); ++j) {
        const Vec zj = z.points().col(j);
        const RamResult r = ram_full(phi, z, zj);
        worst = std::max(worst, (r.projected - zj).norm());
      }
      it.passed = worst <= 1e-6;
      it.detail = "max |RAM(z_j) - z_j| " + fmt(worst) + ", embedded rank " + std::to_string(embedded_rank(z)) +
                  " (K = " + std::to_string(z.count()) + ")";
    });
  }
  return items;
}

}  // namespace starflow
