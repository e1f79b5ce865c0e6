#include <doctest.h>

#include <fstream>
#include <numbers>
#include <sstream>

#include "starflow/pipeline.hpp"
#include "starflow/toy.hpp"
#include "support.hpp"

using namespace starflow;
namespace fs = std::filesystem;
using sftest::vec2;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p);
  os << s;
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  return line;
}

Mat small_matrix() {
  Mat m(3, 2);
  m << 0.1, -2.5e-300, 1.0 / 3.0, 4e12, -0.0, 7.25;
  return m;
}

// Two labelled clusters, 60 points each.
fs::path two_cluster_csv(const fs::path& dir) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.2);
  std::ostringstream os;
  os << "x,y,label\n";
  for (int i = 0; i < 120; ++i) {
    const int c = i % 2;
    const double t = (i / 2) / 30.0 - 1.0;
    os << (c ? -2.0 : 2.0) + 0.4 * t + n(rng) << ',' << (c ? -1.0 : 1.0) * t + n(rng) << ',' << c << '\n';
  }
  const fs::path p = dir / "clusters.csv";
  write_text(p, os.str());
  return p;
}

}  // namespace

TEST_CASE("matrix files") {
  const auto dir = sftest::scratch_dir("io");
  const Mat m = small_matrix();

  save_sfam((dir / "m.sfam").string(), m);
  CHECK(load_sfam((dir / "m.sfam").string()) == m);
  save_matrix((dir / "m.csv").string(), m);
  const Mat back = load_matrix((dir / "m.csv").string());
  REQUIRE(back.rows() == 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    CHECK(std::abs(back.data()[i] - m.data()[i]) <= 1e-15 * std::max(1.0, std::abs(m.data()[i])));
  }
  save_matrix((dir / "m.bin").string(), m);
  CHECK(load_matrix((dir / "m.bin").string()) == m);

  write_text(dir / "empty.csv", "");
  CHECK_THROWS_AS(load_matrix((dir / "empty.csv").string()), Error);
  write_text(dir / "ragged.csv", "1,2\n3\n");
  CHECK_THROWS_AS(load_matrix((dir / "ragged.csv").string()), Error);
  write_text(dir / "text.csv", "1,2\n3,abc\n");
  CHECK_THROWS_AS(load_matrix((dir / "text.csv").string()), Error);
  fs::resize_file(dir / "m.sfam", fs::file_size(dir / "m.sfam") - 1);
  CHECK_THROWS_AS(load_sfam((dir / "m.sfam").string()), Error);
  write_text(dir / "bad.sfam", "XXXX");
  CHECK_THROWS_AS(load_sfam((dir / "bad.sfam").string()), Error);
  CHECK_THROWS_AS(load_sfam((dir / "nothing.sfam").string()), Error);
}

TEST_CASE("datasets with labels") {
  const auto dir = sftest::scratch_dir("labels");
  write_text(dir / "three.csv", "x,y,label\n0.5,1.5,1\n-2,3,0\n");
  CsvOptions opts;
  opts.label_column = 2;
  const Dataset ds = load_dataset((dir / "three.csv").string(), DataFormat::detect, opts);
  CHECK(ds.x.rows() == 2);
  CHECK(ds.x.cols() == 2);
  CHECK(ds.x(0, 0) == 0.5);
  CHECK(ds.x(1, 1) == 3.0);
  CHECK(ds.labels == std::vector<int>{1, 0});
  CHECK(ds.classes() == 2);

  write_text(dir / "noheader.csv", "1,2\n3,4\n");
  CHECK(load_dataset((dir / "noheader.csv").string()).x.rows() == 2);
  CsvOptions forced;
  forced.header = true;
  CHECK(load_dataset((dir / "noheader.csv").string(), DataFormat::csv, forced).x.rows() == 1);

  write_text(dir / "gap.csv", "1,2,0\n3,4,2\n");
  CHECK_THROWS_AS(load_dataset((dir / "gap.csv").string(), DataFormat::csv, opts), Error);
  write_text(dir / "frac.csv", "1,2,0.5\n");
  CHECK_THROWS_AS(load_dataset((dir / "frac.csv").string(), DataFormat::csv, opts), Error);
  opts.label_column = 7;
  CHECK_THROWS_AS(load_dataset((dir / "three.csv").string(), DataFormat::csv, opts), Error);
  CHECK_NOTHROW(validate_labels({0, 2, 1, 1}));
  CHECK_THROWS_AS(validate_labels({1, 2}), Error);
}

TEST_CASE("run configuration") {
  const auto dir = sftest::scratch_dir("config");
  write_text(dir / "pts.csv", "1,2\n3,4\n");
  const std::string text = R"({
    "data": {"path": "pts.csv"},
    "mode": "unlabeled", "k": 3, "seed": 10,
    "flow": {"train": false, "epochs": 7, "learning_rate": 0.01},
    "radial": {"alpha": 1.5, "beta": 0.5, "t_min": 0.2},
    "warp": {"a": 0},
    "out": "res"
  })";
  RunConfig cfg = parse_config_json(text, dir.string());
  CHECK(cfg.data_path == (dir / "pts.csv").string());
  CHECK(cfg.out_dir == (dir / "res").string());
  CHECK(cfg.k == 3);
  CHECK_FALSE(cfg.train);
  CHECK(cfg.train_cfg.epochs == 7);
  CHECK(cfg.radial.alpha == 1.5);
  CHECK(cfg.t_min == 0.2);
  CHECK(cfg.t_max == 0.1);
  CHECK(cfg.warp_a == 0.0);
  CHECK(cfg.arch.seed == 10);
  CHECK(cfg.train_cfg.seed == 11);
  CHECK(cfg.aa.seed == 12);
  CHECK_NOTHROW(validate(cfg));

  RunConfig bad = cfg;
  bad.radial.alpha = 1.0;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = cfg;
  bad.radial.beta = 1.5;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = cfg;
  bad.k = 0;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = cfg;
  bad.data_path = (dir / "absent.csv").string();
  CHECK_THROWS_AS(validate(bad), Error);
  bad = cfg;
  bad.mode = FitMode::labeled;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = cfg;
  bad.train = true;
  bad.train_cfg.batch_size = -1;
  CHECK_THROWS_AS(validate(bad), Error);

  CHECK_THROWS_AS(parse_config_json("{not json", ""), Error);
  CHECK_THROWS_AS(parse_config_json(R"({"mode": "both"})", ""), Error);
  CHECK_THROWS_AS(parse_config_json(R"({"k": "four"})", ""), Error);
  CHECK_THROWS_AS(load_config((dir / "none.json").string()), Error);
}

TEST_CASE("model files") {
  const auto dir = sftest::scratch_dir("model");
  const auto toy = toy_star_model();
  const ModelBundle bundle{toy, toy_archetypes(*toy), {0, 1, 2, 3}};
  save_model((dir / "toy.json").string(), bundle);
  const ModelBundle back = load_model((dir / "toy.json").string());
  CHECK(back.archetypes == bundle.archetypes);
  CHECK(back.archetype_labels == bundle.archetype_labels);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const Vec x = sftest::randn(rng, 2, 2.0);
    CHECK(back.model->log_density(x) == toy->log_density(x));
    CHECK(back.model->composite()->forward(x) == toy->composite()->forward(x));
  }

  FlowArchitecture arch;
  arch.blocks = 2;
  arch.hidden = 4;
  CouplingFlow flow(2, arch);
  flow.set_params(sftest::randn(rng, static_cast<int>(flow.params().size()), 0.3));
  const auto model = std::make_shared<StarModel>(std::make_shared<CouplingFlow>(flow), toy_two_branch_radial(), nullptr);
  save_model((dir / "flow.json").string(), {model, Mat(2, 0), {}}, "base.sfaa");
  CHECK(fs::exists(dir / "base.sfaa"));
  const ModelBundle fb = load_model((dir / "flow.json").string());
  const Vec x = vec2(0.3, -1.2);
  CHECK(fb.model->log_density(x) == doctest::Approx(model->log_density(x)).epsilon(1e-14));
  CHECK(fb.archetypes.cols() == 0);
  CHECK_FALSE(fb.model->warp());

  write_text(dir / "wrong.json", R"({"format": "other", "version": 1})");
  CHECK_THROWS_AS(load_model((dir / "wrong.json").string()), Error);
  fs::remove(dir / "base.sfaa");
  CHECK_THROWS_AS(load_model((dir / "flow.json").string()), Error);
}

TEST_CASE("three-step fit") {
  const auto dir = sftest::scratch_dir("fit");
  const fs::path csv = two_cluster_csv(dir);

  RunConfig cfg;
  cfg.data_path = csv.string();
  cfg.csv.label_column = 2;
  cfg.mode = FitMode::labeled;
  cfg.k = 2;
  cfg.arch.blocks = 1;
  cfg.arch.hidden = 4;
  cfg.train_cfg.epochs = 3;
  cfg.train_cfg.batch_size = 40;
  apply_seed(cfg, 4);
  validate(cfg);
  const Dataset data = load_dataset(cfg.data_path, cfg.format, cfg.csv);
  const FitResult fit = three_step_fit(cfg, data);

  SUBCASE("labelled mode contract") {
    CHECK(fit.bundle.archetypes.cols() == 4);
    CHECK(fit.bundle.archetype_labels == std::vector<int>{0, 0, 1, 1});
    CHECK(fit.point_labels == data.labels);
    CHECK(fit.loss_history.size() == 3);
    const auto* star = dynamic_cast<const StarRadial*>(fit.bundle.model->radial().get());
    REQUIRE(star);
    CHECK(star->branches().size() == 2);
  }

  SUBCASE("branch ellipsoids enclose their latent points") {
    const auto* star = dynamic_cast<const StarRadial*>(fit.bundle.model->radial().get());
    const auto& phi_a = *fit.bundle.model->base();
    for (int c = 0; c < 2; ++c) {
      const BranchRadial& b = star->branches()[c];
      double off = 0.0, cen = 0.0;
      int n = 0;
      for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        if (data.labels[i] != c) continue;
        const Vec y = phi_a.forward(data.x.row(i).transpose());
        off += b.offcentered().quadratic(y);
        cen += b.centered().quadratic(y);
        ++n;
      }
      CHECK(off / n <= 1.0);
      CHECK(cen / n <= 1.0);
      CHECK(b.offcentered().center_form() < 1.0);
    }
  }

  SUBCASE("outputs are deterministic and reloadable") {
    write_fit_outputs((dir / "a").string(), fit);
    write_fit_outputs((dir / "b").string(), three_step_fit(cfg, data));
    for (const char* name : {"model.json", "flow.sfaa", "archetypes.sfam", "archetypes.csv", "archetype_labels.csv",
                             "labels.csv", "loss_history.csv"}) {
      CAPTURE(name);
      REQUIRE(fs::exists(dir / "a" / name));
      CHECK(read_text(dir / "a" / name) == read_text(dir / "b" / name));
    }
    CHECK(load_matrix((dir / "a" / "archetypes.sfam").string()).rows() == 4);
    CHECK(load_matrix((dir / "a" / "archetypes.csv").string()).rows() == 4);
    CHECK(first_line(dir / "a" / "loss_history.csv") == "epoch,nll");
    const ModelBundle back = load_model((dir / "a" / "model.json").string());
    CHECK(back.archetypes.cols() == 4);
  }

  SUBCASE("unlabelled mode without training") {
    RunConfig u = cfg;
    u.mode = FitMode::unlabeled;
    u.train = false;
    u.k = 3;
    const FitResult r = three_step_fit(u, data);
    CHECK(r.bundle.archetypes.cols() == 3);
    CHECK(r.loss_history.empty());
    CHECK(r.bundle.archetype_labels == std::vector<int>{0, 1, 2});
    // Identity base: archetypes are convex combinations of the data.
    for (int j = 0; j < 3; ++j) {
      CHECK(r.bundle.archetypes(0, j) >= data.x.col(0).minCoeff() - 1e-12);
      CHECK(r.bundle.archetypes(0, j) <= data.x.col(0).maxCoeff() + 1e-12);
    }
  }

  SUBCASE("stage failures are tagged") {
    RunConfig u = cfg;
    u.mode = FitMode::unlabeled;
    u.train = false;
    u.k = 500;
    try {
      three_step_fit(u, data);
      FAIL("expected a failure");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).rfind("[archetypes]", 0) == 0);
    }
    RunConfig t = cfg;
    t.train_cfg.batch_size = 1000;
    try {
      three_step_fit(t, data);
      FAIL("expected a failure");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).rfind("[flow]", 0) == 0);
    }
  }
}

TEST_CASE("analysis outputs") {
  const auto id = std::make_shared<IdentityDiffeo>(2);
  const StarModel plain(id, std::make_shared<ConstantRadial>(2, 1.0), nullptr);
  const Mat frames = geodesic_frames(plain, vec2(0, 0), vec2(4, 2), 5, false);
  for (int k = 0; k < 5; ++k) CHECK((frames.row(k).transpose() - vec2(k, k / 2.0)).norm() < 1e-14);
  CHECK_THROWS_AS(geodesic_frames(plain, vec2(0, 0), vec2(1, 1), 1, false), Error);

  const auto toy = toy_star_model();
  const ModelBundle bundle{toy, toy_archetypes(*toy), {0, 1, 2, 3}};
  const Mat iso = geodesic_frames(*toy, bundle.archetypes.col(0), bundle.archetypes.col(1), 64, true);
  CHECK(sftest::chord_cv(iso) <= 0.05);

  const GridSpec g = parse_grid("-1:1:3,-2:2:5");
  CHECK(g.nx == 3);
  CHECK(g.ny == 5);
  CHECK(g.ymin == -2.0);
  const GridSpec sq = parse_grid("-3:3:7");
  CHECK(sq.ny == 7);
  CHECK(sq.xmax == 3.0);
  CHECK_THROWS_AS(parse_grid("1:2"), Error);
  CHECK_THROWS_AS(parse_grid("2:1:5"), Error);

  const Mat grid = density_grid(plain, g);
  REQUIRE(grid.rows() == 15);
  CHECK(grid(1, 0) == 0.0);
  CHECK(grid(1, 1) == -2.0);
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    const double r2 = grid(i, 0) * grid(i, 0) + grid(i, 1) * grid(i, 1);
    CHECK(grid(i, 2) == doctest::Approx(-0.5 * r2 - std::log(2 * std::numbers::pi)).epsilon(1e-13));
  }
  const Mat fine = density_grid(*toy, parse_grid("-12:12:301"));
  const double h = 24.0 / 300.0;
  CHECK(std::abs(fine.col(2).array().exp().sum() * h * h - 1.0) < 1e-2);

  const auto dir = sftest::scratch_dir("tables");
  const ArchetypeSet z = archetype_set(bundle);
  const auto results = ram_batch(toy->composite(), z, sample_star(*toy, 5, 1), {}, 1);
  write_ram_csv((dir / "ram.csv").string(), results, bundle.archetype_labels);
  write_class_csv((dir / "cls.csv").string(), results, bundle.archetype_labels);
  const std::string head = first_line(dir / "ram.csv");
  for (const char* col : {"index", "class", "lambda_0", "lambda_3", "iso_lambda_0", "reconstruction_error",
                          "iterations", "converged", "iso_class"}) {
    CHECK(head.find(col) != std::string::npos);
  }
  CHECK(first_line(dir / "cls.csv") ==
        "index,class,iso_class,mass_0,mass_1,mass_2,mass_3,iso_mass_0,iso_mass_1,iso_mass_2,iso_mass_3");
  CHECK(load_matrix((dir / "ram.csv").string()).rows() == 5);
}

TEST_CASE("invariant suite on the toy model") {
  const auto toy = toy_star_model();
  const auto items = run_checks({toy, toy_archetypes(*toy), {0, 1, 2, 3}}, 1);
  REQUIRE(items.size() >= 8);
  for (const auto& it : items) {
    CAPTURE(it.name);
    CAPTURE(it.detail);
    CHECK(it.passed);
  }
}
