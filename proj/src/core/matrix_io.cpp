#include "starflow/matrix_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "binio.hpp"

namespace starflow {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                                                 [](char a, char b) { return std::tolower(a) == b; });
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool numeric_line(const std::vector<std::string>& fields) {
  double v;
  return std::all_of(fields.begin(), fields.end(), [&](const std::string& f) { return parse_double(f, v); });
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int Dataset::classes() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

void validate_labels(const std::vector<int>& labels) {
  if (labels.empty()) return;
  const std::set<int> ids(labels.begin(), labels.end());
  if (*ids.begin() != 0 || *ids.rbegin() != static_cast<int>(ids.size()) - 1) {
    throw Error(ErrorCode::format, "labels must be contiguous integers starting at 0");
  }
}

void save_sfam(const std::string& path, const Mat& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::io, "save_sfam: cannot open " + path);
  os.write("SFAM", 4);
  binio::put_u32(os, static_cast<std::uint32_t>(m.rows()));
  binio::put_u32(os, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) binio::put_f64(os, m(i, j));
  }
  if (!os) throw Error(ErrorCode::io, "save_sfam: write failed for " + path);
}

Mat load_sfam(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::io, "load_sfam: cannot open " + path);
  const char* what = "load_sfam";
  binio::expect_magic(is, "SFAM", what);
  const std::uint32_t rows = binio::get_u32(is, what);
  const std::uint32_t cols = binio::get_u32(is, what);
  is.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(is.tellg());
  if (size != 12 + 8ull * rows * cols) throw Error(ErrorCode::format, "load_sfam: size does not match the header shape");
  is.seekg(12);
  Mat m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i) {
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = binio::get_f64(is, what);
  }
  return m;
}

void save_csv(const std::string& path, const Mat& m, const std::vector<std::string>& header) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io, "save_csv: cannot open " + path);
  if (!header.empty()) {
    require_dim(static_cast<Eigen::Index>(header.size()), m.cols(), "save_csv header");
    for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
    os << '\n';
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << format_double(m(i, j));
    os << '\n';
  }
  if (!os) throw Error(ErrorCode::io, "save_csv: write failed for " + path);
}

Mat load_csv(const std::string& path, const CsvOptions& opts, std::vector<int>* labels) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::io, "load_csv: cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_fields(line));
  }
  if (rows.empty()) throw Error(ErrorCode::format, "load_csv: " + path + " is empty");
  const bool header = opts.header.value_or(!numeric_line(rows.front()));
  if (header) rows.erase(rows.begin());
  if (rows.empty()) throw Error(ErrorCode::format, "load_csv: " + path + " has a header but no data");

  const auto width = rows.front().size();
  const bool labelled = opts.label_column >= 0;
  if (labelled && static_cast<std::size_t>(opts.label_column) >= width) {
    throw Error(ErrorCode::format, "load_csv: label column out of range");
  }
  const auto cols = static_cast<Eigen::Index>(width - (labelled ? 1 : 0));
  Mat m(static_cast<Eigen::Index>(rows.size()), cols);
  if (labels) labels->clear();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != width) {
      throw Error(ErrorCode::format, "load_csv: row " + std::to_string(i + 1) + " has " +
                                         std::to_string(rows[i].size()) + " fields, expected " + std::to_string(width));
    }
    Eigen::Index j = 0;
    for (std::size_t f = 0; f < width; ++f) {
      double v;
      if (!parse_double(rows[i][f], v)) {
        throw Error(ErrorCode::format, "load_csv: malformed number '" + rows[i][f] + "' in row " + std::to_string(i + 1));
      }
      if (labelled && static_cast<int>(f) == opts.label_column) {
        if (v != std::floor(v)) throw Error(ErrorCode::format, "load_csv: non-integer label in row " + std::to_string(i + 1));
        if (labels) labels->push_back(static_cast<int>(v));
      } else {
        m(static_cast<Eigen::Index>(i), j++) = v;
      }
    }
  }
  return m;
}

void save_matrix(const std::string& path, const Mat& m) {
  if (ends_with(path, ".csv")) {
    save_csv(path, m);
  } else {
    save_sfam(path, m);
  }
}

Mat load_matrix(const std::string& path) {
  return ends_with(path, ".csv") ? load_csv(path) : load_sfam(path);
}

Dataset load_dataset(const std::string& path, DataFormat format, const CsvOptions& opts) {
  if (format == DataFormat::detect) format = ends_with(path, ".csv") ? DataFormat::csv : DataFormat::sfam;
  Dataset ds;
  ds.provenance = path;
  if (format == DataFormat::csv) {
    ds.x = load_csv(path, opts, &ds.labels);
  } else {
    if (opts.label_column >= 0) throw Error(ErrorCode::unsupported, "load_dataset: label columns are only read from CSV");
    ds.x = load_sfam(path);
  }
  if (ds.x.rows() == 0 || ds.x.cols() == 0) throw Error(ErrorCode::format, "load_dataset: " + path + " holds no data");
  if (!ds.x.allFinite()) throw Error(ErrorCode::format, "load_dataset: non-finite entries in " + path);
  validate_labels(ds.labels);
  return ds;
}

}  // namespace starflow
