#pragma once

#include <optional>
#include <string>
#include <vector>

#include "starflow/types.hpp"

namespace starflow {

enum class DataFormat { detect, csv, sfam };

struct CsvOptions {
  std::optional<bool> header;  // unset: a first line with any non-numeric field is a header
  int label_column = -1;       // zero-based column holding integer labels; -1 for none
};

/// N x d points as rows plus optional integer labels 0..C-1.
struct Dataset {
  Mat x;
  std::vector<int> labels;
  std::string provenance;

  int classes() const;
};

Dataset load_dataset(const std::string& path, DataFormat format = DataFormat::detect, const CsvOptions& opts = {});

/// Binary "SFAM" layout: magic, u32 rows, u32 cols, little-endian f64 row-major.
void save_sfam(const std::string& path, const Mat& m);
Mat load_sfam(const std::string& path);

/// Comma separated, 17 significant digits.
void save_csv(const std::string& path, const Mat& m, const std::vector<std::string>& header = {});
Mat load_csv(const std::string& path, const CsvOptions& opts = {}, std::vector<int>* labels = nullptr);

/// Chooses the format from the extension: ".csv" is text, anything else SFAM.
void save_matrix(const std::string& path, const Mat& m);
Mat load_matrix(const std::string& path);

/// Throws unless labels are exactly {0, ..., C-1} with every id present.
void validate_labels(const std::vector<int>& labels);

}  // namespace starflow
