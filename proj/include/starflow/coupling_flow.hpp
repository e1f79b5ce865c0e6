#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "starflow/diffeo.hpp"

namespace starflow {

struct FlowArchitecture {
  int blocks = 4;
  int hidden = 32;
  bool permute = false;          // append a fixed reversal permutation to every block
  bool identity_mixing = false;  // start Householder vectors at zero instead of random
  std::uint64_t seed = 0;
};

enum class LayerKind : std::uint32_t { householder = 1, coupling = 2, permutation = 3 };

struct ParamSlice {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

/// Stack of [Householder mix, coupling(even), coupling(odd)] blocks.
///
/// A coupling layer keeps the coordinates of one parity fixed and shifts the
/// others by W2 tanh(W1 u + b1) + b2 where u are the fixed coordinates. Every
/// layer has |det| = 1, so log_det is identically 0.
class CouplingFlow final : public Diffeo {
 public:
  struct Layer {
    LayerKind kind;
    int parity = 0;            // coupling: coordinates with i % 2 == parity condition the rest
    int hidden = 0;            // coupling: conditioner width
    std::vector<int> perm;     // permutation: y[i] = x[perm[i]]
    Eigen::Index offset = 0;   // first parameter in the flat vector
    Eigen::Index size = 0;
  };

  CouplingFlow(int d, const FlowArchitecture& arch);
  CouplingFlow(int d, std::vector<Layer> layers, Vec params);

  int dim() const override { return d_; }
  Vec forward(const Vec& x) const override;
  Vec inverse(const Vec& y) const override;
  Vec jvp(const Vec& x, const Vec& v) const override;
  Vec inverse_jvp(const Vec& y, const Vec& w) const override;
  Vec inverse_vjp(const Vec& y, const Vec& w) const override;
  LogDet log_det(const Vec& x) const override;

  /// Columns of x are points.
  Mat forward_batch(const Mat& x) const;
  Mat inverse_batch(const Mat& y) const;

  const std::vector<Layer>& layers() const { return layers_; }
  const Vec& params() const { return params_; }
  void set_params(const Vec& p);
  std::vector<ParamSlice> param_slices() const;

 private:
  friend struct FlowBackprop;
  void layer_forward(const Layer& l, Mat& x) const;
  void layer_inverse(const Layer& l, Mat& y) const;

  int d_;
  std::vector<Layer> layers_;
  Vec params_;
};

/// Mean over rows of 0.5 |phi(x)|^2 (the trainable part of the NLL) and its parameter gradient.
struct LossGrad {
  double loss = 0.0;
  Vec grad;
};

/// `batch` is n x d with points as rows.
LossGrad nll_loss(const CouplingFlow& f, const Mat& batch);

/// loss + d/2 log(2 pi): the full negative log-likelihood under a standard normal base.
double full_nll(const CouplingFlow& f, const Mat& data);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 128;
  int epochs = 50;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 10.0;
};

void validate(const TrainConfig& cfg);

struct TrainResult {
  CouplingFlow flow;
  double initial_nll = 0.0;
  std::vector<double> history;  // full NLL on the training data after each epoch
  double max_round_trip = 0.0;  // worst probe-batch round trip error seen across epochs
};

/// Adam on nll_loss with a seeded shuffle. `data` is N x d with points as rows.
TrainResult train_flow(const Mat& data, const FlowArchitecture& arch, const TrainConfig& cfg);

constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const CouplingFlow& f);
CouplingFlow load_checkpoint(const std::string& path);

}  // namespace starflow
