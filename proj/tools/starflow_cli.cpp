// starflow command line front end; talks to the library only through its C interface.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "starflow/starflow.h"

namespace {

struct Failure {
  int code;
};

void ok(sf_status s, const char* what) {
  if (s != SF_OK) {
    std::fprintf(stderr, "starflow: %s failed (%s): %s\n", what, sf_status_name(s), sf_last_error());
    throw Failure{2};
  }
}

using MatrixPtr = std::unique_ptr<sf_matrix, decltype(&sf_matrix_free)>;
using ModelPtr = std::unique_ptr<sf_model, decltype(&sf_model_free)>;

MatrixPtr hold(sf_matrix* m) { return {m, &sf_matrix_free}; }

ModelPtr open_model(const std::string& path) {
  sf_model* m = nullptr;
  ok(sf_model_load(path.c_str(), &m), "loading model");
  return {m, &sf_model_free};
}

std::vector<double> parse_point(const std::string& text, int dim, const char* flag) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      std::fprintf(stderr, "starflow: %s expects comma-separated numbers, got '%s'\n", flag, text.c_str());
      throw Failure{1};
    }
  }
  if (static_cast<int>(v.size()) != dim) {
    std::fprintf(stderr, "starflow: %s has %zu coordinates, model dimension is %d\n", flag, v.size(), dim);
    throw Failure{1};
  }
  return v;
}

// Archetype j as a point, for --from-archetype / --to-archetype.
std::vector<double> archetype_point(const sf_model* model, int j) {
  sf_matrix* raw = nullptr;
  ok(sf_model_archetypes(model, &raw), "reading archetypes");
  auto z = hold(raw);
  if (j < 0 || static_cast<std::size_t>(j) >= sf_matrix_rows(z.get())) {
    std::fprintf(stderr, "starflow: archetype index %d out of range\n", j);
    throw Failure{1};
  }
  const std::size_t d = sf_matrix_cols(z.get());
  const double* p = sf_matrix_data(z.get()) + static_cast<std::size_t>(j) * d;
  return {p, p + d};
}

// Loads a data matrix, dropping a label column when requested.
MatrixPtr load_points(const std::string& path, int label_column) {
  sf_matrix* raw = nullptr;
  ok(sf_matrix_load(path.c_str(), &raw), "loading data");
  auto m = hold(raw);
  if (label_column < 0) return m;
  const std::size_t rows = sf_matrix_rows(m.get()), cols = sf_matrix_cols(m.get());
  if (static_cast<std::size_t>(label_column) >= cols) {
    std::fprintf(stderr, "starflow: label column %d out of range\n", label_column);
    throw Failure{1};
  }
  std::vector<double> kept;
  kept.reserve(rows * (cols - 1));
  const double* d = sf_matrix_data(m.get());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (static_cast<int>(j) != label_column) kept.push_back(d[i * cols + j]);
    }
  }
  sf_matrix* out = nullptr;
  ok(sf_matrix_create(rows, cols - 1, kept.data(), &out), "dropping label column");
  return hold(out);
}

void save(const sf_matrix* m, const std::string& path) { ok(sf_matrix_save(m, path.c_str()), "writing output"); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Archetypal analysis on deformed star distributions"};
  app.set_version_flag("--version", std::string(sf_version()));
  app.require_subcommand(1);

  std::string config, out, mode, model_path, data_path, from, to, grid = "-4:4:101";
  std::uint64_t seed = 0;
  int k = 0, frames = 64, n = 1000, threads = 0, label_column = -1, from_arch = -1, to_arch = -1;
  bool iso = false;

  auto* fit = app.add_subcommand("fit", "train the flow, extract archetypes, fit the radial function");
  fit->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", out, "output directory (overrides the config)");
  auto* fit_seed = fit->add_option("--seed", seed, "seed for every stage");
  fit->add_option("--mode", mode, "unlabeled or labeled")->check(CLI::IsMember({"unlabeled", "labeled"}));
  fit->add_option("--k", k, "archetypes per branch/class")->check(CLI::PositiveNumber);

  auto* geo = app.add_subcommand("geodesic", "sample a pullback geodesic");
  geo->add_option("--model", model_path, "model.json")->required();
  geo->add_option("--from", from, "start point x1,x2,...");
  geo->add_option("--to", to, "end point");
  geo->add_option("--from-archetype", from_arch, "use archetype j as the start");
  geo->add_option("--to-archetype", to_arch, "use archetype j as the end");
  geo->add_option("--frames", frames, "number of frames")->check(CLI::Range(2, 1000000));
  geo->add_flag("--iso", iso, "constant l2-speed reparametrization");
  geo->add_option("--out", out, "output matrix (.csv or SFAM)")->required();

  auto* ram = app.add_subcommand("ram", "Riemannian archetypal mapping of data points");
  auto* cls = app.add_subcommand("classify", "class masses from RAM weights");
  for (auto* sub : {ram, cls}) {
    sub->add_option("--model", model_path, "model.json")->required();
    sub->add_option("--data", data_path, "points (.csv or SFAM)")->required()->check(CLI::ExistingFile);
    sub->add_option("--label-column", label_column, "drop this CSV column before solving");
    sub->add_option("--threads", threads, "worker threads (default STARFLOW_THREADS)");
  }
  ram->add_option("--out", out, "output directory")->required();
  cls->add_option("--out", out, "output CSV")->required();

  auto* dens = app.add_subcommand("density", "log-density on a planar grid");
  dens->add_option("--model", model_path, "model.json")->required();
  dens->add_option("--grid", grid, "lo:hi:n or xlo:xhi:nx,ylo:yhi:ny");
  dens->add_option("--out", out, "output matrix")->required();

  auto* smp = app.add_subcommand("sample", "draw samples from the model");
  smp->add_option("--model", model_path, "model.json")->required();
  smp->add_option("--n", n, "sample count")->check(CLI::PositiveNumber);
  smp->add_option("--seed", seed, "sampling seed");
  smp->add_option("--out", out, "output matrix")->required();

  auto* chk = app.add_subcommand("check", "run the invariant suite on a model");
  chk->add_option("--model", model_path, "model.json")->required();
  chk->add_option("--seed", seed, "probe seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) {
      sf_fit_overrides ov{};
      ov.out_dir = out.empty() ? nullptr : out.c_str();
      ov.mode = mode.empty() ? nullptr : mode.c_str();
      ov.k = k;
      ov.has_seed = fit_seed->count() > 0;
      ov.seed = seed;
      sf_fit_summary s{};
      ok(sf_fit(config.c_str(), &ov, &s), "fit");
      std::printf("fit: %zu points, d = %d, %d archetypes, NLL %.6f -> %.6f over %d epochs\n", s.points, s.dim,
                  s.archetypes, s.initial_nll, s.final_nll, s.epochs);
    } else if (*geo) {
      auto model = open_model(model_path);
      const int d = sf_model_dim(model.get());
      if ((from.empty()) == (from_arch < 0) || (to.empty()) == (to_arch < 0)) {
        std::fprintf(stderr, "starflow: give exactly one of --from/--from-archetype and of --to/--to-archetype\n");
        return 1;
      }
      const auto x = from_arch >= 0 ? archetype_point(model.get(), from_arch) : parse_point(from, d, "--from");
      const auto y = to_arch >= 0 ? archetype_point(model.get(), to_arch) : parse_point(to, d, "--to");
      sf_matrix* raw = nullptr;
      ok(sf_geodesic(model.get(), x.data(), y.data(), frames, iso ? 1 : 0, &raw), "geodesic");
      save(hold(raw).get(), out);
    } else if (*ram || *cls) {
      auto model = open_model(model_path);
      auto points = load_points(data_path, label_column);
      sf_ram_batch* raw = nullptr;
      ok(sf_ram(model.get(), points.get(), threads, &raw), "ram");
      std::unique_ptr<sf_ram_batch, decltype(&sf_ram_batch_free)> batch(raw, &sf_ram_batch_free);
      if (*ram) {
        namespace fs = std::filesystem;
        std::error_code ec;
        fs::create_directories(out, ec);
        if (ec) {
          std::fprintf(stderr, "starflow: cannot create %s: %s\n", out.c_str(), ec.message().c_str());
          return 2;
        }
        ok(sf_ram_batch_write_csv(batch.get(), (fs::path(out) / "ram.csv").string().c_str()), "writing ram.csv");
        sf_matrix* proj = nullptr;
        ok(sf_ram_batch_projected(batch.get(), &proj), "projected points");
        auto p = hold(proj);
        save(p.get(), (fs::path(out) / "projected.sfam").string());
        save(p.get(), (fs::path(out) / "projected.csv").string());
        std::printf("ram: %zu points, mean reconstruction error %.6g\n", sf_ram_batch_size(batch.get()),
                    sf_ram_batch_mean_error(batch.get()));
      } else {
        ok(sf_ram_batch_write_classes(batch.get(), out.c_str()), "writing classes");
        std::printf("classify: %zu points\n", sf_ram_batch_size(batch.get()));
      }
    } else if (*dens) {
      auto model = open_model(model_path);
      sf_matrix* raw = nullptr;
      ok(sf_density_grid(model.get(), grid.c_str(), &raw), "density");
      save(hold(raw).get(), out);
    } else if (*smp) {
      auto model = open_model(model_path);
      sf_matrix* raw = nullptr;
      ok(sf_sample(model.get(), n, seed, &raw), "sample");
      save(hold(raw).get(), out);
    } else if (*chk) {
      sf_check_report* raw = nullptr;
      ok(sf_check(model_path.c_str(), seed, &raw), "check");
      std::unique_ptr<sf_check_report, decltype(&sf_check_report_free)> report(raw, &sf_check_report_free);
      for (std::size_t i = 0; i < sf_check_report_count(report.get()); ++i) {
        std::printf("[%s] %s: %s\n", sf_check_report_item_passed(report.get(), i) ? "PASS" : "FAIL",
                    sf_check_report_name(report.get(), i), sf_check_report_detail(report.get(), i));
      }
      return sf_check_report_passed(report.get()) ? 0 : 3;
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
