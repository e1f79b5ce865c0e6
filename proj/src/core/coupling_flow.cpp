#include "starflow/coupling_flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "binio.hpp"

namespace starflow {

namespace {

using Index = Eigen::Index;

std::vector<int> parity_indices(int d, int parity, bool match) {
  std::vector<int> out;
  for (int i = 0; i < d; ++i) {
    if ((i % 2 == parity) == match) out.push_back(i);
  }
  return out;
}

Index coupling_size(int d, int parity, int hidden) {
  const Index na = static_cast<Index>(parity_indices(d, parity, true).size());
  const Index nb = d - na;
  return hidden * na + hidden + nb * hidden + nb;
}

Index layer_size(int d, const CouplingFlow::Layer& l) {
  switch (l.kind) {
    case LayerKind::householder: return static_cast<Index>(d) * d;
    case LayerKind::coupling: return coupling_size(d, l.parity, l.hidden);
    case LayerKind::permutation: return 0;
  }
  return 0;
}

// Views into the flat parameter vector for one coupling layer.
template <class Ptr>
struct CouplingView {
  std::vector<int> cond, shift;
  Eigen::Map<std::conditional_t<std::is_const_v<std::remove_pointer_t<Ptr>>, const Mat, Mat>> w1, b1, w2, b2;

  CouplingView(int d, const CouplingFlow::Layer& l, Ptr base)
      : cond(parity_indices(d, l.parity, true)),
        shift(parity_indices(d, l.parity, false)),
        w1(base, l.hidden, static_cast<Index>(cond.size())),
        b1(base + l.hidden * cond.size(), l.hidden, 1),
        w2(base + l.hidden * (cond.size() + 1), static_cast<Index>(shift.size()), l.hidden),
        b2(base + l.hidden * (cond.size() + 1) + shift.size() * l.hidden, static_cast<Index>(shift.size()), 1) {}
};

Mat gather_rows(const Mat& x, const std::vector<int>& rows) {
  Mat out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

void scatter_add_rows(Mat& x, const std::vector<int>& rows, const Mat& src) {
  for (std::size_t i = 0; i < rows.size(); ++i) x.row(rows[i]) += src.row(static_cast<Index>(i));
}

template <class View>
Mat conditioner_hidden(const View& c, const Mat& u) {
  return ((c.w1 * u).colwise() + c.b1.col(0)).array().tanh().matrix();
}

// Jacobian of the conditioner shift with respect to the conditioning coordinates.
template <class View>
Mat conditioner_jacobian(const View& c, const Vec& u) {
  const Vec h = conditioner_hidden(c, Mat(u)).col(0);
  const Vec slope = (1.0 - h.array().square()).matrix();
  return c.w2 * slope.asDiagonal() * c.w1;
}

Vec gather(const Vec& x, const std::vector<int>& idx) {
  Vec out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = x[idx[i]];
  return out;
}

void householder_apply(const double* base, int d, Mat& x, bool reverse) {
  for (int s = 0; s < d; ++s) {
    const int k = reverse ? d - 1 - s : s;
    const Eigen::Map<const Vec> v(base + static_cast<Index>(k) * d, d);
    const double nn = v.squaredNorm();
    if (nn == 0.0) continue;
    x -= (2.0 / nn) * v * (v.transpose() * x);
  }
}

}  // namespace

CouplingFlow::CouplingFlow(int d, const FlowArchitecture& arch) : d_(d) {
  if (d < 2) throw Error(ErrorCode::invalid_argument, "coupling flow: dimension must be at least 2");
  if (arch.blocks < 0 || arch.hidden < 1) throw Error(ErrorCode::invalid_argument, "coupling flow: bad architecture");
  Index offset = 0;
  auto add = [&](Layer l) {
    l.offset = offset;
    l.size = layer_size(d, l);
    offset += l.size;
    layers_.push_back(std::move(l));
  };
  std::vector<int> reversal(d);
  for (int i = 0; i < d; ++i) reversal[i] = d - 1 - i;
  for (int b = 0; b < arch.blocks; ++b) {
    add({LayerKind::householder, 0, 0, {}});
    add({LayerKind::coupling, 0, arch.hidden, {}});
    add({LayerKind::coupling, 1, arch.hidden, {}});
    if (arch.permute) add({LayerKind::permutation, 0, 0, reversal});
  }
  params_ = Vec::Zero(offset);

  std::mt19937_64 rng(arch.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& l : layers_) {
    double* base = params_.data() + l.offset;
    if (l.kind == LayerKind::householder && !arch.identity_mixing) {
      for (Index i = 0; i < l.size; ++i) base[i] = normal(rng);
    } else if (l.kind == LayerKind::coupling) {
      CouplingView<double*> c(d, l, base);
      const double scale = 1.0 / std::sqrt(static_cast<double>(c.cond.size()));
      for (Index i = 0; i < c.w1.size(); ++i) c.w1.data()[i] = scale * normal(rng);
    }
  }
}

CouplingFlow::CouplingFlow(int d, std::vector<Layer> layers, Vec params)
    : d_(d), layers_(std::move(layers)), params_(std::move(params)) {
  if (d < 2) throw Error(ErrorCode::invalid_argument, "coupling flow: dimension must be at least 2");
  Index offset = 0;
  for (auto& l : layers_) {
    if (l.kind == LayerKind::coupling && (l.hidden < 1 || (l.parity != 0 && l.parity != 1))) {
      throw Error(ErrorCode::format, "coupling flow: bad coupling layer descriptor");
    }
    if (l.kind == LayerKind::permutation) {
      std::vector<int> sorted = l.perm;
      std::sort(sorted.begin(), sorted.end());
      std::vector<int> iota(d);
      std::iota(iota.begin(), iota.end(), 0);
      if (sorted != iota) throw Error(ErrorCode::format, "coupling flow: permutation layer is not a permutation");
    }
    l.offset = offset;
    l.size = layer_size(d, l);
    offset += l.size;
  }
  if (params_.size() != offset) throw Error(ErrorCode::format, "coupling flow: parameter count does not match layers");
  if (!params_.allFinite()) throw Error(ErrorCode::format, "coupling flow: non-finite parameters");
}

void CouplingFlow::set_params(const Vec& p) {
  require_dim(p.size(), params_.size(), "coupling flow parameters");
  params_ = p;
}

std::vector<ParamSlice> CouplingFlow::param_slices() const {
  std::vector<ParamSlice> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const std::string tag = "layer" + std::to_string(i);
    if (l.kind == LayerKind::householder) {
      out.push_back({tag + ".householder", l.offset, l.size});
    } else if (l.kind == LayerKind::coupling) {
      CouplingView<const double*> c(d_, l, params_.data() + l.offset);
      const Index base = l.offset;
      out.push_back({tag + ".w1", base, c.w1.size()});
      out.push_back({tag + ".b1", base + c.w1.size(), c.b1.size()});
      out.push_back({tag + ".w2", base + c.w1.size() + c.b1.size(), c.w2.size()});
      out.push_back({tag + ".b2", base + c.w1.size() + c.b1.size() + c.w2.size(), c.b2.size()});
    }
  }
  return out;
}

void CouplingFlow::layer_forward(const Layer& l, Mat& x) const {
  const double* base = params_.data() + l.offset;
  switch (l.kind) {
    case LayerKind::householder: householder_apply(base, d_, x, false); break;
    case LayerKind::coupling: {
      CouplingView<const double*> c(d_, l, base);
      const Mat h = conditioner_hidden(c, gather_rows(x, c.cond));
      scatter_add_rows(x, c.shift, (c.w2 * h).colwise() + c.b2.col(0));
      break;
    }
    case LayerKind::permutation: {
      const Mat in = x;
      for (int i = 0; i < d_; ++i) x.row(i) = in.row(l.perm[i]);
      break;
    }
  }
}

void CouplingFlow::layer_inverse(const Layer& l, Mat& y) const {
  const double* base = params_.data() + l.offset;
  switch (l.kind) {
    case LayerKind::householder: householder_apply(base, d_, y, true); break;
    case LayerKind::coupling: {
      CouplingView<const double*> c(d_, l, base);
      const Mat h = conditioner_hidden(c, gather_rows(y, c.cond));
      scatter_add_rows(y, c.shift, -((c.w2 * h).colwise() + c.b2.col(0)));
      break;
    }
    case LayerKind::permutation: {
      const Mat in = y;
      for (int i = 0; i < d_; ++i) y.row(l.perm[i]) = in.row(i);
      break;
    }
  }
}

Mat CouplingFlow::forward_batch(const Mat& x) const {
  require_dim(x.rows(), d_, "coupling flow forward");
  Mat out = x;
  for (const auto& l : layers_) layer_forward(l, out);
  return out;
}

Mat CouplingFlow::inverse_batch(const Mat& y) const {
  require_dim(y.rows(), d_, "coupling flow inverse");
  Mat out = y;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) layer_inverse(*it, out);
  return out;
}

Vec CouplingFlow::forward(const Vec& x) const {
  check_dim(x, "coupling flow forward");
  return forward_batch(x).col(0);
}

Vec CouplingFlow::inverse(const Vec& y) const {
  check_dim(y, "coupling flow inverse");
  return inverse_batch(y).col(0);
}

Vec CouplingFlow::jvp(const Vec& x, const Vec& v) const {
  check_dim(x, "coupling flow jvp");
  check_dim(v, "coupling flow jvp");
  Mat p = x;
  Mat t = v;
  for (const auto& l : layers_) {
    if (l.kind == LayerKind::coupling) {
      CouplingView<const double*> c(d_, l, params_.data() + l.offset);
      const Mat jm = conditioner_jacobian(c, gather(p.col(0), c.cond));
      scatter_add_rows(t, c.shift, jm * gather_rows(t, c.cond));
      layer_forward(l, p);
    } else {
      layer_forward(l, p);
      layer_forward(l, t);
    }
  }
  return t.col(0);
}

Vec CouplingFlow::inverse_jvp(const Vec& y, const Vec& w) const {
  check_dim(y, "coupling flow inverse_jvp");
  check_dim(w, "coupling flow inverse_jvp");
  Mat p = y;
  Mat t = w;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    const auto& l = *it;
    if (l.kind == LayerKind::coupling) {
      CouplingView<const double*> c(d_, l, params_.data() + l.offset);
      const Mat jm = conditioner_jacobian(c, gather(p.col(0), c.cond));
      scatter_add_rows(t, c.shift, -(jm * gather_rows(t, c.cond)));
      layer_inverse(l, p);
    } else {
      layer_inverse(l, p);
      layer_inverse(l, t);
    }
  }
  return t.col(0);
}

Vec CouplingFlow::inverse_vjp(const Vec& y, const Vec& w) const {
  check_dim(y, "coupling flow inverse_vjp");
  check_dim(w, "coupling flow inverse_vjp");
  // outputs[i] is where layer i's inverse is evaluated.
  std::vector<Mat> outputs(layers_.size());
  Mat p = y;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    outputs[i] = p;
    layer_inverse(layers_[i], p);
  }
  Mat t = w;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.kind == LayerKind::coupling) {
      CouplingView<const double*> c(d_, l, params_.data() + l.offset);
      const Mat jm = conditioner_jacobian(c, gather(outputs[i].col(0), c.cond));
      scatter_add_rows(t, c.cond, -(jm.transpose() * gather_rows(t, c.shift)));
    } else {
      // Reflections are symmetric and permutations orthogonal: the transposed inverse is the forward map.
      layer_forward(l, t);
    }
  }
  return t.col(0);
}

LogDet CouplingFlow::log_det(const Vec& x) const {
  check_dim(x, "coupling flow log_det");
  return {0.0, true};
}

struct FlowBackprop {
  static LossGrad run(const CouplingFlow& f, const Mat& batch) {
    const int d = f.d_;
    const Index n = batch.rows();
    if (n == 0) throw Error(ErrorCode::invalid_argument, "nll_loss: empty batch");
    require_dim(batch.cols(), d, "nll_loss");

    std::vector<Mat> inputs;
    inputs.reserve(f.layers_.size());
    Mat x = batch.transpose();
    for (const auto& l : f.layers_) {
      inputs.push_back(x);
      f.layer_forward(l, x);
    }
    LossGrad out;
    out.loss = 0.5 * x.squaredNorm() / static_cast<double>(n);
    if (!std::isfinite(out.loss) || !x.allFinite()) {
      throw Error(ErrorCode::numerical, "nll_loss: non-finite activations in the flow output");
    }
    out.grad = Vec::Zero(f.params_.size());
    Mat g = x / static_cast<double>(n);

    for (std::size_t li = f.layers_.size(); li-- > 0;) {
      const auto& l = f.layers_[li];
      const double* base = f.params_.data() + l.offset;
      double* gbase = out.grad.data() + l.offset;
      switch (l.kind) {
        case LayerKind::householder: {
          std::vector<Mat> pre(d);
          Mat cur = inputs[li];
          for (int k = 0; k < d; ++k) {
            pre[k] = cur;
            const Eigen::Map<const Vec> v(base + static_cast<Index>(k) * d, d);
            const double nn = v.squaredNorm();
            if (nn > 0.0) cur -= (2.0 / nn) * v * (v.transpose() * cur);
          }
          for (int k = d - 1; k >= 0; --k) {
            const Eigen::Map<const Vec> v(base + static_cast<Index>(k) * d, d);
            const double nn = v.squaredNorm();
            if (nn == 0.0) continue;
            const Eigen::RowVectorXd a = v.transpose() * pre[k];
            const Eigen::RowVectorXd b = v.transpose() * g;
            Eigen::Map<Vec> gv(gbase + static_cast<Index>(k) * d, d);
            gv = (-2.0 / nn) * (pre[k] * b.transpose() + g * a.transpose()) + (4.0 * a.dot(b) / (nn * nn)) * v;
            g -= (2.0 / nn) * v * b;
          }
          break;
        }
        case LayerKind::coupling: {
          CouplingView<const double*> c(d, l, base);
          CouplingView<double*> gc(d, l, gbase);
          const Mat u = gather_rows(inputs[li], c.cond);
          const Mat h = conditioner_hidden(c, u);
          const Mat gs = gather_rows(g, c.shift);
          gc.w2 = gs * h.transpose();
          gc.b2 = gs.rowwise().sum();
          const Mat gpre = ((c.w2.transpose() * gs).array() * (1.0 - h.array().square())).matrix();
          gc.w1 = gpre * u.transpose();
          gc.b1 = gpre.rowwise().sum();
          scatter_add_rows(g, c.cond, c.w1.transpose() * gpre);
          break;
        }
        case LayerKind::permutation: {
          const Mat in = g;
          for (int i = 0; i < d; ++i) g.row(l.perm[i]) = in.row(i);
          break;
        }
      }
    }
    if (!out.grad.allFinite()) throw Error(ErrorCode::numerical, "nll_loss: non-finite gradient");
    return out;
  }
};

LossGrad nll_loss(const CouplingFlow& f, const Mat& batch) { return FlowBackprop::run(f, batch); }

double full_nll(const CouplingFlow& f, const Mat& data) {
  if (data.rows() == 0) throw Error(ErrorCode::invalid_argument, "full_nll: empty data");
  require_dim(data.cols(), f.dim(), "full_nll");
  const Mat z = f.forward_batch(data.transpose());
  return 0.5 * z.squaredNorm() / static_cast<double>(data.rows()) + 0.5 * f.dim() * std::log(2.0 * M_PI);
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0) || cfg.batch_size < 1 || cfg.epochs < 0 || !(cfg.clip_norm > 0.0) ||
      !(cfg.eps > 0.0) || !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "train config: rates, sizes and moment parameters must be positive");
  }
}

TrainResult train_flow(const Mat& data, const FlowArchitecture& arch, const TrainConfig& cfg) {
  validate(cfg);
  const Index n = data.rows();
  if (n < cfg.batch_size) throw Error(ErrorCode::invalid_argument, "train_flow: fewer points than the batch size");
  if (!data.allFinite()) throw Error(ErrorCode::invalid_argument, "train_flow: non-finite data");

  TrainResult res{CouplingFlow(static_cast<int>(data.cols()), arch), 0.0, {}, 0.0};
  CouplingFlow& f = res.flow;
  res.initial_nll = full_nll(f, data);

  const Mat probe = data.topRows(std::min<Index>(64, n)).transpose();
  Vec params = f.params();
  Vec m1 = Vec::Zero(params.size());
  Vec m2 = Vec::Zero(params.size());
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  long step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index len = std::min<Index>(cfg.batch_size, n - start);
      Mat batch(len, data.cols());
      for (Index i = 0; i < len; ++i) batch.row(i) = data.row(order[start + i]);
      LossGrad lg = nll_loss(f, batch);
      const double gn = lg.grad.norm();
      if (gn > cfg.clip_norm) lg.grad *= cfg.clip_norm / gn;
      ++step;
      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * lg.grad;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * lg.grad.cwiseProduct(lg.grad);
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      params -= (cfg.learning_rate * (m1 / c1).array() / ((m2 / c2).array().sqrt() + cfg.eps)).matrix();
      f.set_params(params);
    }
    const double nll = full_nll(f, data);
    res.history.push_back(nll);
    if (!std::isfinite(nll)) {
      std::ostringstream msg;
      msg << "train_flow: non-finite loss at epoch " << epoch << "; history:";
      for (double h : res.history) msg << ' ' << h;
      throw Error(ErrorCode::numerical, msg.str());
    }
    const Mat back = f.inverse_batch(f.forward_batch(probe));
    for (Index j = 0; j < probe.cols(); ++j) {
      const double err = (back.col(j) - probe.col(j)).norm() / (1.0 + probe.col(j).norm());
      res.max_round_trip = std::max(res.max_round_trip, err);
    }
    if (res.max_round_trip > 1e-8) {
      throw Error(ErrorCode::numerical, "train_flow: invertibility lost at epoch " + std::to_string(epoch));
    }
  }
  return res;
}

void save_checkpoint(const std::string& path, const CouplingFlow& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::io, "save_checkpoint: cannot open " + path);
  os.write("SFAA", 4);
  binio::put_u32(os, kCheckpointVersion);
  binio::put_u32(os, static_cast<std::uint32_t>(f.dim()));
  binio::put_u32(os, static_cast<std::uint32_t>(f.layers().size()));
  for (const auto& l : f.layers()) {
    binio::put_u32(os, static_cast<std::uint32_t>(l.kind));
    binio::put_u32(os, static_cast<std::uint32_t>(l.parity));
    binio::put_u32(os, static_cast<std::uint32_t>(l.hidden));
    binio::put_u32(os, static_cast<std::uint32_t>(l.perm.size()));
    for (int p : l.perm) binio::put_u32(os, static_cast<std::uint32_t>(p));
  }
  binio::put_u64(os, static_cast<std::uint64_t>(f.params().size()));
  for (Index i = 0; i < f.params().size(); ++i) binio::put_f64(os, f.params()[i]);
  if (!os) throw Error(ErrorCode::io, "save_checkpoint: write failed for " + path);
}

CouplingFlow load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::io, "load_checkpoint: cannot open " + path);
  const char* what = "load_checkpoint";
  binio::expect_magic(is, "SFAA", what);
  const std::uint32_t version = binio::get_u32(is, what);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::format, "load_checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t d = binio::get_u32(is, what);
  const std::uint32_t count = binio::get_u32(is, what);
  if (d < 2 || d > 1u << 20 || count > 1u << 16) throw Error(ErrorCode::format, "load_checkpoint: implausible header");
  std::vector<CouplingFlow::Layer> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    CouplingFlow::Layer l{};
    const std::uint32_t kind = binio::get_u32(is, what);
    if (kind < 1 || kind > 3) throw Error(ErrorCode::format, "load_checkpoint: unknown layer kind");
    l.kind = static_cast<LayerKind>(kind);
    l.parity = static_cast<int>(binio::get_u32(is, what));
    l.hidden = static_cast<int>(binio::get_u32(is, what));
    const std::uint32_t np = binio::get_u32(is, what);
    if (np > d) throw Error(ErrorCode::format, "load_checkpoint: permutation longer than the dimension");
    if (l.kind == LayerKind::permutation && np != d) throw Error(ErrorCode::format, "load_checkpoint: short permutation");
    for (std::uint32_t j = 0; j < np; ++j) l.perm.push_back(static_cast<int>(binio::get_u32(is, what)));
    layers.push_back(std::move(l));
  }
  const std::uint64_t np = binio::get_u64(is, what);
  if (np > (1ull << 32)) throw Error(ErrorCode::format, "load_checkpoint: implausible parameter count");
  Vec params(static_cast<Index>(np));
  for (Index i = 0; i < params.size(); ++i) params[i] = binio::get_f64(is, what);
  return CouplingFlow(static_cast<int>(d), std::move(layers), std::move(params));
}

}  // namespace starflow
