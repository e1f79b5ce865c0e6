// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "starflow/pipeline.hpp"
#include "starflow/toy.hpp"
#include "support.hpp"

using namespace starflow;
namespace fs = std::filesystem;
using sftest::vec2;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Random star radial function in d dimensions from three fitted branches.
std::shared_ptr<StarRadial> random_star(std::mt19937_64& rng, int d) {
  std::vector<BranchRadial> branches;
  for (int b = 0; b < 3; ++b) {
    const Vec dir = sftest::unit(rng, d);
    Mat pts(d, 200);
    for (int i = 0; i < 200; ++i) pts.col(i) = 1.5 * dir * (i / 200.0) + sftest::randn(rng, d, 0.2);
    branches.emplace_back(fit_offcentered(pts), fit_centered(pts), 0.1);
  }
  return std::make_shared<StarRadial>(std::move(branches), 0.1);
}

Outcome c1_diffeomorphisms() {
  std::mt19937_64 rng(101);
  double rt = 0.0, jv = 0.0;
  for (int d : {2, 3, 8}) {
    const auto rho = random_star(rng, d);
    FlowArchitecture arch;
    arch.blocks = 4;
    arch.hidden = 16;
    arch.seed = static_cast<std::uint64_t>(d);
    auto flow = std::make_shared<CouplingFlow>(d, arch);
    flow->set_params(flow->params() + sftest::randn(rng, static_cast<int>(flow->params().size()), 0.3));
    const auto s_rho = std::make_shared<RadialScaling>(rho);
    const auto nu = std::make_shared<NormWarp>(d, std::make_shared<LogWarp>(10.0));
    const std::vector<DiffeoPtr> maps{s_rho, nu, flow, compose({s_rho, nu}), compose({flow, s_rho, nu})};
    for (const auto& phi : maps) {
      for (int i = 0; i < 1000; ++i) {
        const Vec x = sftest::randn(rng, d, 1.5);
        rt = std::max(rt, sftest::rel_err(phi->inverse(phi->forward(x)), x));
        const Vec v = sftest::unit(rng, d);
        const Vec fd = sftest::central_diff([&](const Vec& p) { return phi->forward(p); }, x, v);
        jv = std::max(jv, sftest::rel_err(phi->jvp(x, v), fd));
      }
    }
  }
  return {rt <= 1e-8 && jv <= 1e-4, "max round trip " + num(rt) + ", max jvp deviation " + num(jv)};
}

Outcome c2_convexity(const ModelBundle& toy) {
  const StarModel& m = *toy.model;
  const auto phi = m.composite();
  std::mt19937_64 rng(202);
  double worst = INFINITY;
  for (int pair = 0; pair < 100; ++pair) {
    const Vec a = sftest::randn(rng, 2, 2.0), b = sftest::randn(rng, 2, 2.0);
    const Curve g = pullback_geodesic(phi, a, b);
    std::vector<double> f(65);
    for (int k = 0; k < 65; ++k) f[k] = -m.log_density(g.eval(k / 64.0));
    for (int k = 1; k < 64; ++k) worst = std::min(worst, f[k + 1] - 2 * f[k] + f[k - 1]);
  }
  return {worst > -1e-9, "min second difference " + num(worst) + " over 100 pairs"};
}

double grid_mass(const StarModel& m) {
  const int n = 500;
  const double half = 10.0, h = 2 * half / n;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) s += std::exp(m.log_density(vec2(-half + (i + 0.5) * h, -half + (j + 0.5) * h)));
  }
  return s * h * h;
}

Outcome c3_normalization() {
  const auto id = std::make_shared<IdentityDiffeo>(2);
  const double flat = grid_mass(StarModel(id, std::make_shared<ConstantRadial>(2, 1.0), nullptr));
  const auto arm = toy_two_branch_radial()->branches().front();
  const double two = grid_mass(StarModel(id, std::make_shared<StarRadial>(std::vector<BranchRadial>{arm}, 0.1), nullptr));
  const double pair = grid_mass(StarModel(id, toy_two_branch_radial(), nullptr));
  const bool ok = std::abs(flat - 1) <= 1e-2 && std::abs(two - 1) <= 1e-2 && std::abs(pair - 1) <= 1e-2;
  return {ok, "rho=1: " + num(flat) + ", two-ellipsoid branch: " + num(two) + ", two branches: " + num(pair)};
}

Outcome c4_iso_geodesics(const ModelBundle& toy) {
  const auto phi = toy.model->composite();
  const Mat& z = toy.archetypes;
  double iso_worst = 0.0, plain_best = INFINITY;
  for (int i = 0; i < z.cols(); ++i) {
    for (int j = i + 1; j < z.cols(); ++j) {
      iso_worst = std::max(iso_worst, sftest::chord_cv(iso_geodesic(phi, z.col(i), z.col(j)).sample(64)));
      plain_best = std::min(plain_best, sftest::chord_cv(pullback_geodesic(phi, z.col(i), z.col(j)).sample(64)));
    }
  }
  return {iso_worst <= 0.05 && plain_best > 0.25,
          "iso CV max " + num(iso_worst) + ", plain CV min " + num(plain_best) + " over archetype pairs"};
}

struct RamRun {
  std::vector<RamResult> sampled, members;
  ArchetypeSet z;
  DiffeoPtr phi;
};

RamRun run_toy_ram(const ModelBundle& toy) {
  RamRun run{{}, {}, archetype_set(toy), toy.model->composite()};
  const Mat pts = sample_star(*toy.model, 500, 42);
  run.sampled = ram_batch(run.phi, run.z, pts, {}, 1);
  std::mt19937_64 rng(505);
  std::exponential_distribution<double> ex(1.0);
  Mat members(200, 2);
  for (int i = 0; i < 200; ++i) {
    Vec w(run.z.count());
    for (int j = 0; j < w.size(); ++j) w[j] = ex(rng);
    members.row(i) = archetype_combination(*run.phi, run.z, w / w.sum()).transpose();
  }
  run.members = ram_batch(run.phi, run.z, members, {}, 1);
  for (int i = 0; i < 200; ++i) run.members[i].relaxed_point = members.row(i).transpose();
  return run;
}

Outcome c5_ram(const RamRun& run) {
  int max_rel = 0, unconverged = 0, improved = 0;
  double refine_iters = 0.0;
  for (const auto& r : run.sampled) {
    max_rel = std::max(max_rel, r.relaxed_iterations);
    if (!r.relaxed_converged) ++unconverged;
    if (r.reconstruction_error <= r.relaxed_error + 1e-12) ++improved;
    refine_iters += r.refine_iterations;
  }
  double member = 0.0;
  for (const auto& r : run.members) member = std::max(member, (r.projected - r.relaxed_point).norm());
  const double frac = improved / static_cast<double>(run.sampled.size());
  return {unconverged == 0 && max_rel <= 500 && frac >= 0.95 && member <= 1e-6,
          "relaxed iterations max " + std::to_string(max_rel) + " (" + std::to_string(unconverged) +
              " unconverged), refine improves " + num(100 * frac) + "%, mean refine iterations " +
              num(refine_iters / run.sampled.size()) + ", member error max " + num(member)};
}

double iso_residual(const RamRun& run, const RamResult& r) {
  Vec sum = Vec::Zero(run.z.dim());
  double longest = 0.0;
  for (int j = 0; j < run.z.count(); ++j) {
    const Vec zj = run.z.points().col(j);
    const Vec lg = pullback_log(*run.phi, r.projected, zj);
    if (lg.norm() == 0.0) continue;
    const double len = arc_length(pullback_geodesic(run.phi, r.projected, zj), kDefaultArcSamples).total();
    const Vec iso = len / lg.norm() * lg;
    sum += r.iso_weights[j] * iso;
    longest = std::max(longest, iso.norm());
  }
  return longest > 0.0 ? sum.norm() / longest : 0.0;
}

Outcome c6_iso_weights(const RamRun& run) {
  double worst = 0.0;
  for (const auto* set : {&run.sampled, &run.members}) {
    for (const auto& r : *set) worst = std::max(worst, iso_residual(run, r));
  }
  const auto id = std::make_shared<IdentityDiffeo>(2);
  Mat tri(2, 3);
  tri << 0, 2, 0, 0, 0, 2;
  const ArchetypeSet z(*id, tri);
  std::mt19937_64 rng(606);
  bool exact = true;
  for (int i = 0; i < 100; ++i) {
    const RamResult r = ram_full(id, z, sftest::randn(rng, 2, 2.0));
    exact = exact && r.iso_weights == r.weights;
  }
  return {worst <= 1e-3 && exact,
          "max relative residual " + num(worst) + ", identity map weights " + (exact ? "unchanged" : "changed")};
}

Outcome c7_ellipsoids() {
  std::mt19937_64 rng(707);
  const EllipsoidFitParams p{1.1, 1.0};
  const int ns[] = {1, 2, 50, 500}, ds[] = {2, 5, 10};
  int failures = 0, count = 0;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const int n = ns[k % 4], d = ds[(k / 4) % 3];
    Mat pts(d, n);
    const Vec shift = sftest::randn(rng, d, 0.5 + (k % 7));
    for (int i = 0; i < n; ++i) pts.col(i) = shift + sftest::randn(rng, d, 0.2 + 0.3 * (k % 5));
    const Ellipsoid off = fit_offcentered(pts, p), cen = fit_centered(pts, p);
    double qo = 0.0, qc = 0.0;
    for (int i = 0; i < n; ++i) {
      qo += off.quadratic(pts.col(i));
      qc += pts.col(i).dot(cen.apply_inverse(pts.col(i)));
    }
    qo /= n;
    qc /= n;
    const Vec c = pts.rowwise().mean();
    const double cc = c.dot(cen.apply_inverse(c));
    worst = std::max({worst, qo, qc, off.center_form(), cc});
    if (!(qo <= 1.0 + 1e-12 && qc <= 1.0 + 1e-12 && off.center_form() < 1.0 && cc < 1.0)) ++failures;
    ++count;
  }
  return {failures == 0, std::to_string(count) + " datasets, " + std::to_string(failures) +
                             " violations, largest constraint value " + num(worst)};
}

Outcome c8_latent_aa() {
  Mat v(2, 3);
  v << 0.0, 1.0, 0.5, 0.0, 0.0, std::sqrt(3.0) / 2;
  int good = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Mat x = triangle_hull_data(v, 1000, 800 + seed);
    AAConfig cfg;
    cfg.seed = seed;
    const Mat found = x.transpose() * aa_fit(x.transpose(), 3, cfg).b;
    std::vector<int> perm{0, 1, 2};
    double best = INFINITY;
    do {
      double e = 0.0;
      for (int j = 0; j < 3; ++j) e = std::max(e, (found.col(j) - v.col(perm[j])).norm());
      best = std::min(best, e);
    } while (std::next_permutation(perm.begin(), perm.end()));
    worst = std::max(worst, best);
    if (best <= 0.1) ++good;
  }
  return {good == 5, std::to_string(good) + "/5 seeds within 0.1, worst vertex error " + num(worst)};
}

Outcome c9_flow_training() {
  FlowArchitecture arch;
  arch.blocks = 4;
  arch.hidden = 4;
  arch.seed = 9;
  CouplingFlow f(2, arch);
  std::mt19937_64 rng(909);
  f.set_params(f.params() + sftest::randn(rng, static_cast<int>(f.params().size()), 0.4));
  Mat batch(32, 2);
  for (int i = 0; i < 32; ++i) batch.row(i) = sftest::randn(rng, 2, 1.5).transpose();
  const LossGrad lg = nll_loss(f, batch);
  const Vec p0 = f.params();
  Vec fd(p0.size());
  for (Eigen::Index k = 0; k < p0.size(); ++k) {
    Vec p = p0;
    p[k] += 1e-4;
    f.set_params(p);
    const double up = nll_loss(f, batch).loss;
    p[k] = p0[k] - 1e-4;
    f.set_params(p);
    fd[k] = (up - nll_loss(f, batch).loss) / 2e-4;
  }
  double grad_err = 0.0;
  for (const auto& s : f.param_slices()) {
    const Vec g = lg.grad.segment(s.offset, s.size), n = fd.segment(s.offset, s.size);
    grad_err = std::max(grad_err, (g - n).norm() / std::max(n.norm(), 1e-12));
  }

  const Mat data = load_dataset(std::string(STARFLOW_DATA_DIR) + "/cross.csv").x;
  FlowArchitecture big;
  big.seed = 1;
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 5e-3;
  cfg.seed = 2;
  const TrainResult a = train_flow(data, big, cfg);
  const TrainResult b = train_flow(data, big, cfg);
  const double drop = a.initial_nll - a.history.back();
  const bool same = a.history == b.history && a.flow.params() == b.flow.params();
  return {grad_err <= 1e-3 && drop >= 0.5 && same,
          "gradient relative error " + num(grad_err) + ", NLL " + num(a.initial_nll) + " -> " + num(a.history.back()) +
              " in 200 epochs, repeat run " + (same ? "identical" : "differs")};
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

int run(const std::string& cmd, const fs::path& log) {
  const int rc = std::system((cmd + " > " + quoted(log) + " 2>&1").c_str());
#ifdef WEXITSTATUS
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
#else
  return rc;
#endif
}

Outcome c10_end_to_end() {
  const fs::path data(STARFLOW_DATA_DIR);
  const fs::path cli(STARFLOW_CLI);
  const fs::path out = fs::temp_directory_path() / "starflow_acceptance_cross";
  fs::remove_all(out);
  fs::create_directories(out);

  if (run(quoted(cli) + " fit --config " + quoted(data / "cross_config.json") + " --out " + quoted(out / "fit"),
          out / "fit.log") != 0) {
    return {false, "fit failed, see " + (out / "fit.log").string()};
  }
  const int check = run(quoted(cli) + " check --model " + quoted(out / "fit" / "model.json"), out / "check.log");
  if (run(quoted(cli) + " ram --model " + quoted(out / "fit" / "model.json") + " --data " + quoted(data / "cross.csv") +
              " --out " + quoted(out / "ram"),
          out / "ram.log") != 0) {
    return {false, "ram failed, see " + (out / "ram.log").string()};
  }

  std::ifstream meta(data / "cross.json");
  const double noise = nlohmann::json::parse(meta).at("noise_scale").get<double>();

  std::ifstream table(out / "ram" / "ram.csv");
  std::string line;
  std::getline(table, line);
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  const auto at = std::find(cols.begin(), cols.end(), "reconstruction_error");
  if (at == cols.end()) return {false, "ram.csv lacks reconstruction_error"};
  const auto col = static_cast<std::size_t>(at - cols.begin());
  double total = 0.0;
  int rows = 0;
  while (std::getline(table, line)) {
    std::stringstream ss(line);
    std::string c;
    for (std::size_t k = 0; k <= col; ++k) std::getline(ss, c, ',');
    total += std::stod(c);
    ++rows;
  }
  const double mean = rows ? total / rows : INFINITY;

  const Mat z = load_matrix((out / "fit" / "archetypes.csv").string());
  std::set<int> arms;
  for (Eigen::Index j = 0; j < z.rows(); ++j) {
    const double x = z(j, 0), y = z(j, 1);
    arms.insert(std::abs(x) >= std::abs(y) ? (x > 0 ? 0 : 2) : (y > 0 ? 1 : 3));
  }
  const bool ok = check == 0 && z.rows() == 4 && arms.size() == 4 && mean < noise;
  return {ok, "check exit " + std::to_string(check) + ", " + std::to_string(arms.size()) +
                  " distinct arms, mean reconstruction error " + num(mean) + " vs noise " + num(noise)};
}

}  // namespace

int main() {
  const ModelBundle toy = load_model(std::string(STARFLOW_DATA_DIR) + "/toy_star.json");
  std::unique_ptr<RamRun> ram;
  const std::vector<std::pair<double, std::function<Outcome()>>> criteria{
      {10, c1_diffeomorphisms},
      {30, [&] { return c2_convexity(toy); }},
      {0, c3_normalization},
      {0, [&] { return c4_iso_geodesics(toy); }},
      {120,
       [&] {
         ram = std::make_unique<RamRun>(run_toy_ram(toy));
         return c5_ram(*ram);
       }},
      {0, [&] { return c6_iso_weights(*ram); }},
      {0, c7_ellipsoids},
      {0, c8_latent_aa},
      {300, c9_flow_training},
      {600, c10_end_to_end},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double limit = criteria[i].first;
    if (limit > 0 && secs >= limit) {
      o.passed = false;
      o.detail += "; over the " + num(limit) + " s limit";
    }
    if (!o.passed) ++failed;
    std::printf("criterion %2zu: %s  (%.1f s) %s\n", i + 1, o.passed ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
