#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "starflow/coupling_flow.hpp"
#include "starflow/ellipsoid.hpp"
#include "starflow/latent_aa.hpp"
#include "starflow/matrix_io.hpp"
#include "starflow/model_io.hpp"
#include "starflow/ram.hpp"

namespace starflow {

enum class FitMode { unlabeled, labeled };

struct RunConfig {
  std::string data_path;
  DataFormat format = DataFormat::detect;
  CsvOptions csv;
  FitMode mode = FitMode::unlabeled;
  int k = 4;
  bool train = true;  // false keeps phi_A = identity
  FlowArchitecture arch;
  TrainConfig train_cfg;
  EllipsoidFitParams radial;
  double t_min = 0.1;
  double t_max = 0.1;
  double warp_a = 10.0;  // 0 disables the warp
  AAConfig aa;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
};

/// Parses a JSON config; relative paths resolve against `base_dir`.
RunConfig parse_config_json(const std::string& text, const std::string& base_dir);
RunConfig load_config(const std::string& path);

/// Re-derives the per-stage seeds from cfg.seed.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

/// Rejects alpha <= 1, beta outside (0, alpha), K < 1 and bad training settings.
void validate(const RunConfig& cfg);

struct FitResult {
  ModelBundle bundle;
  double initial_nll = 0.0;
  std::vector<double> loss_history;
  std::vector<int> point_labels;  // branch of every data point
  std::vector<double> aa_objectives;
};

/// Flow training, archetypal analysis in the latent space, and per-branch radial fits.
FitResult three_step_fit(const RunConfig& cfg, const Dataset& data);

/// model.json, flow.sfaa, archetypes.{sfam,csv}, archetype_labels.csv, labels.csv, loss_history.csv.
void write_fit_outputs(const std::string& out_dir, const FitResult& fit);

/// frames x d points along the pullback geodesic (constant l2 speed when iso).
Mat geodesic_frames(const StarModel& model, const Vec& x, const Vec& y, int frames, bool iso);

struct GridSpec {
  double xmin = -4, xmax = 4, ymin = -4, ymax = 4;
  int nx = 101, ny = 101;
};

/// "xmin:xmax:nx,ymin:ymax:ny" or "lo:hi:n" for a square grid.
GridSpec parse_grid(const std::string& text);

/// (nx * ny) x 3 rows of x, y, log p(x, y); x varies fastest.
Mat density_grid(const StarModel& model, const GridSpec& grid);

ArchetypeSet archetype_set(const ModelBundle& bundle);

/// Writes the per-point RAM table: index, class, lambda_j, iso_lambda_j, reconstruction_error, iterations, converged.
void write_ram_csv(const std::string& path, const std::vector<RamResult>& results, const std::vector<int>& labels);

/// Per-point class masses for both raw and iso-corrected weights.
void write_class_csv(const std::string& path, const std::vector<RamResult>& results, const std::vector<int>& labels);

struct CheckItem {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Invariant suite over a loaded model and its archetypes.
std::vector<CheckItem> run_checks(const ModelBundle& bundle, std::uint64_t seed = 0);

}  // namespace starflow
