// Regenerates the bundled data files: starflow_fixtures <data-dir>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "starflow/matrix_io.hpp"
#include "starflow/model_io.hpp"
#include "starflow/toy.hpp"

using namespace starflow;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
  if (!os) throw Error(ErrorCode::io, "cannot write " + p.string());
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <data-dir>\n", argv[0]);
    return 1;
  }
  const fs::path dir(argv[1]);
  try {
    fs::create_directories(dir);

    const CrossSpec spec;
    save_csv((dir / "cross.csv").string(), cross_data(spec), {"x", "y"});
    char meta[256];
    std::snprintf(meta, sizeof meta,
                  "{\n  \"noise_scale\": %.17g,\n  \"arm_length\": %.17g,\n  \"per_arm\": %d,\n  \"arms\": 4,\n"
                  "  \"seed\": %llu\n}\n",
                  spec.noise, spec.arm_length, spec.per_arm, static_cast<unsigned long long>(spec.seed));
    write_text(dir / "cross.json", meta);
    write_text(dir / "cross_config.json", R"({
  "data": {"path": "cross.csv", "format": "csv", "header": true},
  "mode": "unlabeled",
  "k": 4,
  "seed": 1,
  "flow": {"train": true, "blocks": 4, "hidden": 32, "learning_rate": 0.0001, "batch_size": 128, "epochs": 20},
  "radial": {"alpha": 1.1, "beta": 1.0, "t_min": 0.1, "t_max": 0.1},
  "warp": {"a": 10},
  "aa": {"max_outer": 500, "inner_steps": 5, "rel_tol": 1e-8},
  "out": "cross_out"
}
)");

    // Two elongated clusters with a label column.
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> along(-1.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.15);
    Mat labelled(400, 3);
    for (int i = 0; i < 400; ++i) {
      const int c = i % 2;
      const double t = along(rng);
      const double cx = c == 0 ? 2.0 : -2.0;
      labelled.row(i) << cx + 0.5 * t + noise(rng), (c == 0 ? 1.0 : -1.0) * t + noise(rng), c;
    }
    save_csv((dir / "two_clusters.csv").string(), labelled, {"x", "y", "label"});
    write_text(dir / "two_clusters_config.json", R"({
  "data": {"path": "two_clusters.csv", "format": "csv", "header": true, "label_column": 2},
  "mode": "labeled",
  "k": 2,
  "seed": 3,
  "flow": {"train": true, "blocks": 2, "hidden": 16, "learning_rate": 0.005, "batch_size": 100, "epochs": 30},
  "radial": {"alpha": 1.1, "beta": 1.0},
  "out": "two_clusters_out"
}
)");

    const auto toy = toy_star_model();
    ModelBundle bundle{toy, toy_archetypes(*toy), {0, 1, 2, 3}};
    save_model((dir / "toy_star.json").string(), bundle);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "starflow_fixtures: %s\n", e.what());
    return 2;
  }
  return 0;
}
