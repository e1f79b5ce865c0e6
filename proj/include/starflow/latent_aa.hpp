#pragma once

#include <cstdint>
#include <vector>

#include "starflow/diffeo.hpp"

namespace starflow {

struct AAConfig {
  int max_outer = 500;
  int inner_steps = 5;
  double rel_tol = 1e-8;
  std::uint64_t seed = 0;
};

/// Y ~ Y B A with columns of B (N x K) and A (K x N) on their simplices.
struct AAFactors {
  Mat b;
  Mat a;
  double objective = 0.0;  // |Y - Y B A|_F^2
  int iterations = 0;
  std::vector<double> trace;  // objective after each outer iteration
};

/// Classical archetypal analysis on the columns of y (d x N).
AAFactors aa_fit(const Mat& y, int k, const AAConfig& cfg = {});

double aa_objective(const Mat& y, const Mat& b, const Mat& a);

/// Column j is phi_A^{-1}(Y b_j); `y` holds phi_A(x_i) column-wise.
Mat decode_archetypes(const Diffeo& phi_a, const Mat& y, const Mat& b);

/// argmax_j A(j, i) per column, ties to the lowest j.
std::vector<int> assign_labels(const Mat& a);

}  // namespace starflow
