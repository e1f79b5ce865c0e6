#pragma once

#include "starflow/types.hpp"

namespace starflow {

/// Euclidean projection onto {w : w >= 0, sum w = 1} by sort-and-threshold.
Vec project_simplex(const Vec& v);

/// Project every column of m onto the simplex, in place.
void project_simplex_columns(Mat& m);

bool on_simplex(const Vec& w, double tol = 1e-10);

/// Largest eigenvalue of the symmetric PSD matrix g by power iteration
/// (at most 50 iterations or relative change below 1e-10).
double lambda_max_power(const Mat& g);

}  // namespace starflow
