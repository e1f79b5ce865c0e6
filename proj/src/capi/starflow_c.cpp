#include "starflow/starflow.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "starflow/pipeline.hpp"

using namespace starflow;

struct sf_matrix {
  Mat rows;
  std::vector<double> buffer;  // row-major copy handed out by sf_matrix_data
};

struct sf_model {
  ModelBundle bundle;
};

struct sf_ram_batch {
  std::vector<RamResult> results;
  std::vector<int> labels;
  int dim = 0;
};

struct sf_check_report {
  std::vector<CheckItem> items;
};

namespace {

thread_local std::string g_last_error;

sf_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return SF_ERR_INVALID_ARGUMENT;
    case ErrorCode::dimension_mismatch: return SF_ERR_DIMENSION;
    case ErrorCode::numerical: return SF_ERR_NUMERICAL;
    case ErrorCode::io: return SF_ERR_IO;
    case ErrorCode::format: return SF_ERR_FORMAT;
    case ErrorCode::unsupported: return SF_ERR_UNSUPPORTED;
  }
  return SF_ERR_INTERNAL;
}

template <class F>
sf_status guard(F&& fn) {
  g_last_error.clear();
  try {
    fn();
    return SF_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SF_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SF_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SF_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::invalid_argument, what);
}

sf_matrix* wrap(const Mat& m) {
  auto* out = new sf_matrix;
  out->rows = m;
  out->buffer.resize(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out->buffer.data(), m.rows(),
                                                                                    m.cols()) = m;
  return out;
}

Vec input_vec(const double* p, int d) {
  require(p != nullptr, "null vector argument");
  return Eigen::Map<const Vec>(p, d);
}

}  // namespace

extern "C" {

const char* sf_version(void) { return "0.1.0"; }

const char* sf_last_error(void) { return g_last_error.c_str(); }

const char* sf_status_name(sf_status status) {
  switch (status) {
    case SF_OK: return "ok";
    case SF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SF_ERR_DIMENSION: return "dimension mismatch";
    case SF_ERR_NUMERICAL: return "numerical failure";
    case SF_ERR_IO: return "i/o error";
    case SF_ERR_FORMAT: return "format error";
    case SF_ERR_UNSUPPORTED: return "unsupported";
    case SF_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

sf_status sf_matrix_create(size_t rows, size_t cols, const double* data, sf_matrix** out) {
  return guard([&] {
    require(out != nullptr, "null output handle");
    require(data != nullptr || rows * cols == 0, "null matrix data");
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (rows * cols > 0) {
      m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(data, m.rows(), m.cols());
    }
    *out = wrap(m);
  });
}

void sf_matrix_free(sf_matrix* m) { delete m; }
size_t sf_matrix_rows(const sf_matrix* m) { return m ? static_cast<size_t>(m->rows.rows()) : 0; }
size_t sf_matrix_cols(const sf_matrix* m) { return m ? static_cast<size_t>(m->rows.cols()) : 0; }
const double* sf_matrix_data(const sf_matrix* m) { return m ? m->buffer.data() : nullptr; }

sf_status sf_matrix_load(const char* path, sf_matrix** out) {
  return guard([&] {
    require(path && out, "null argument");
    *out = wrap(load_matrix(path));
  });
}

sf_status sf_matrix_save(const sf_matrix* m, const char* path) {
  return guard([&] {
    require(m && path, "null argument");
    save_matrix(path, m->rows);
  });
}

sf_status sf_fit(const char* config_path, const sf_fit_overrides* overrides, sf_fit_summary* summary) {
  return guard([&] {
    require(config_path != nullptr, "null config path");
    RunConfig cfg = load_config(config_path);
    if (overrides) {
      if (overrides->out_dir) cfg.out_dir = overrides->out_dir;
      if (overrides->mode) {
        const std::string mode = overrides->mode;
        if (mode == "unlabeled") cfg.mode = FitMode::unlabeled;
        else if (mode == "labeled") cfg.mode = FitMode::labeled;
        else throw Error(ErrorCode::invalid_argument, "mode must be 'unlabeled' or 'labeled'");
      }
      if (overrides->k > 0) cfg.k = overrides->k;
      if (overrides->has_seed) apply_seed(cfg, overrides->seed);
    }
    validate(cfg);
    const Dataset data = load_dataset(cfg.data_path, cfg.format, cfg.csv);
    const FitResult fit = three_step_fit(cfg, data);
    write_fit_outputs(cfg.out_dir, fit);
    if (summary) {
      summary->initial_nll = fit.initial_nll;
      summary->final_nll = fit.loss_history.empty() ? fit.initial_nll : fit.loss_history.back();
      summary->epochs = static_cast<int>(fit.loss_history.size());
      summary->archetypes = static_cast<int>(fit.bundle.archetypes.cols());
      summary->dim = fit.bundle.model->dim();
      summary->points = static_cast<size_t>(data.x.rows());
    }
  });
}

sf_status sf_model_load(const char* path, sf_model** out) {
  return guard([&] {
    require(path && out, "null argument");
    auto m = std::make_unique<sf_model>();
    m->bundle = load_model(path);
    *out = m.release();
  });
}

void sf_model_free(sf_model* model) { delete model; }
int sf_model_dim(const sf_model* model) { return model ? model->bundle.model->dim() : 0; }
int sf_model_archetype_count(const sf_model* model) {
  return model ? static_cast<int>(model->bundle.archetypes.cols()) : 0;
}

sf_status sf_model_archetypes(const sf_model* model, sf_matrix** out) {
  return guard([&] {
    require(model && out, "null argument");
    *out = wrap(model->bundle.archetypes.transpose());
  });
}

sf_status sf_model_log_density(const sf_model* model, const double* x, int normalized, double* out) {
  return guard([&] {
    require(model && out, "null argument");
    *out = model->bundle.model->log_density(input_vec(x, sf_model_dim(model)), normalized != 0);
  });
}

sf_status sf_model_forward(const sf_model* model, const double* x, double* out) {
  return guard([&] {
    require(model && out, "null argument");
    const Vec y = model->bundle.model->composite()->forward(input_vec(x, sf_model_dim(model)));
    std::memcpy(out, y.data(), sizeof(double) * static_cast<std::size_t>(y.size()));
  });
}

sf_status sf_model_inverse(const sf_model* model, const double* y, double* out) {
  return guard([&] {
    require(model && out, "null argument");
    const Vec x = model->bundle.model->composite()->inverse(input_vec(y, sf_model_dim(model)));
    std::memcpy(out, x.data(), sizeof(double) * static_cast<std::size_t>(x.size()));
  });
}

sf_status sf_geodesic(const sf_model* model, const double* x, const double* y, int frames, int iso, sf_matrix** out) {
  return guard([&] {
    require(model && out, "null argument");
    const int d = sf_model_dim(model);
    *out = wrap(geodesic_frames(*model->bundle.model, input_vec(x, d), input_vec(y, d), frames, iso != 0));
  });
}

sf_status sf_density_grid(const sf_model* model, const char* grid, sf_matrix** out) {
  return guard([&] {
    require(model && out, "null argument");
    const GridSpec spec = grid ? parse_grid(grid) : GridSpec{};
    *out = wrap(density_grid(*model->bundle.model, spec));
  });
}

sf_status sf_sample(const sf_model* model, int n, uint64_t seed, sf_matrix** out) {
  return guard([&] {
    require(model && out, "null argument");
    require(n > 0, "sample count must be positive");
    *out = wrap(sample_star(*model->bundle.model, n, seed));
  });
}

sf_status sf_ram(const sf_model* model, const sf_matrix* points, int threads, sf_ram_batch** out) {
  return guard([&] {
    require(model && points && out, "null argument");
    const ArchetypeSet z = archetype_set(model->bundle);
    auto batch = std::make_unique<sf_ram_batch>();
    batch->results = ram_batch(model->bundle.model->composite(), z, points->rows, RamConfig{}, threads);
    batch->labels = model->bundle.archetype_labels;
    batch->dim = z.dim();
    *out = batch.release();
  });
}

void sf_ram_batch_free(sf_ram_batch* batch) { delete batch; }
size_t sf_ram_batch_size(const sf_ram_batch* batch) { return batch ? batch->results.size() : 0; }

double sf_ram_batch_mean_error(const sf_ram_batch* batch) {
  if (!batch || batch->results.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : batch->results) s += r.reconstruction_error;
  return s / static_cast<double>(batch->results.size());
}

sf_status sf_ram_batch_weights(const sf_ram_batch* batch, int iso, sf_matrix** out) {
  return guard([&] {
    require(batch && out, "null argument");
    const Eigen::Index k = batch->results.empty() ? 0 : batch->results.front().weights.size();
    Mat w(static_cast<Eigen::Index>(batch->results.size()), k);
    for (std::size_t i = 0; i < batch->results.size(); ++i) {
      w.row(static_cast<Eigen::Index>(i)) = (iso ? batch->results[i].iso_weights : batch->results[i].weights).transpose();
    }
    *out = wrap(w);
  });
}

sf_status sf_ram_batch_projected(const sf_ram_batch* batch, sf_matrix** out) {
  return guard([&] {
    require(batch && out, "null argument");
    Mat p(static_cast<Eigen::Index>(batch->results.size()), batch->dim);
    for (std::size_t i = 0; i < batch->results.size(); ++i) {
      p.row(static_cast<Eigen::Index>(i)) = batch->results[i].projected.transpose();
    }
    *out = wrap(p);
  });
}

sf_status sf_ram_batch_write_csv(const sf_ram_batch* batch, const char* path) {
  return guard([&] {
    require(batch && path, "null argument");
    write_ram_csv(path, batch->results, batch->labels);
  });
}

sf_status sf_ram_batch_write_classes(const sf_ram_batch* batch, const char* path) {
  return guard([&] {
    require(batch && path, "null argument");
    write_class_csv(path, batch->results, batch->labels);
  });
}

sf_status sf_check(const char* model_path, uint64_t seed, sf_check_report** out) {
  return guard([&] {
    require(model_path && out, "null argument");
    auto report = std::make_unique<sf_check_report>();
    report->items = run_checks(load_model(model_path), seed);
    *out = report.release();
  });
}

void sf_check_report_free(sf_check_report* report) { delete report; }
size_t sf_check_report_count(const sf_check_report* report) { return report ? report->items.size() : 0; }

const char* sf_check_report_name(const sf_check_report* report, size_t i) {
  return report && i < report->items.size() ? report->items[i].name.c_str() : nullptr;
}

const char* sf_check_report_detail(const sf_check_report* report, size_t i) {
  return report && i < report->items.size() ? report->items[i].detail.c_str() : nullptr;
}

int sf_check_report_item_passed(const sf_check_report* report, size_t i) {
  return report && i < report->items.size() && report->items[i].passed ? 1 : 0;
}

int sf_check_report_passed(const sf_check_report* report) {
  if (!report || report->items.empty()) return 0;
  for (const auto& it : report->items) {
    if (!it.passed) return 0;
  }
  return 1;
}

}  // extern "C"
