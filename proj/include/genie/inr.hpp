#pragma once

// Sinusoidal multi-head MLP for signed distance fields.
//
// Every hidden layer computes a = sin(omega0 * (W a_prev + b)); each head is
// linear in the last hidden activation: f_k(x) = w_k . h(x) + b_k.

#include "genie/common.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace genie {

struct Layer {
  Mat weights;  // out x in
  Vec bias;
  bool operator==(const Layer&) const = default;
};

struct Head {
  Vec weights;
  double bias = 0.0;
  std::string label;
  bool operator==(const Head&) const = default;
};

struct Model {
  std::size_t input_dim = 3;
  std::size_t hidden_dim = 128;
  std::size_t depth = 8;
  double omega0 = 30.0;
  std::vector<Layer> backbone;
  std::vector<Head> heads;

  std::size_t n_heads() const { return heads.size(); }
  bool operator==(const Model&) const = default;

  /// Throws InputError if the layer shapes disagree with the declared dims.
  void validate() const {
    if (input_dim == 0 || hidden_dim == 0 || depth == 0)
      throw InputError("model dimensions must be >= 1");
    if (backbone.size() != depth)
      throw InputError("backbone layer count does not match depth");
    for (std::size_t l = 0; l < depth; ++l) {
      const auto in = l == 0 ? input_dim : hidden_dim;
      const auto& layer = backbone[l];
      if (static_cast<std::size_t>(layer.weights.rows()) != hidden_dim ||
          static_cast<std::size_t>(layer.weights.cols()) != in ||
          static_cast<std::size_t>(layer.bias.size()) != hidden_dim)
        throw InputError("backbone layer " + std::to_string(l) + " has wrong shape");
    }
    if (heads.empty()) throw InputError("model has no heads");
    for (const auto& h : heads)
      if (static_cast<std::size_t>(h.weights.size()) != hidden_dim)
        throw InputError("head '" + h.label + "' weight length != hidden_dim");
  }

  const Head& head(std::size_t k) const {
    if (k >= heads.size())
      throw InputError("head index " + std::to_string(k) + " out of range (" +
                       std::to_string(heads.size()) + " heads)");
    return heads[k];
  }
  Head& head(std::size_t k) {
    return const_cast<Head&>(static_cast<const Model&>(*this).head(k));
  }
};

inline Model init_model(std::size_t input_dim, std::size_t hidden_dim, std::size_t depth,
                        double omega0, std::size_t n_heads, std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1 || depth < 1 || n_heads < 1)
    throw ConfigError("init_model: all dimensions and the head count must be >= 1");
  if (!(omega0 > 0.0)) throw ConfigError("init_model: omega0 must be positive");

  std::mt19937_64 rng(seed);
  auto fill = [&rng](auto& m, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  };

  Model m;
  m.input_dim = input_dim;
  m.hidden_dim = hidden_dim;
  m.depth = depth;
  m.omega0 = omega0;
  const double d = static_cast<double>(hidden_dim);
  const double hidden_bound = std::sqrt(6.0 / d) / omega0;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t in = l == 0 ? input_dim : hidden_dim;
    Layer layer{Mat(hidden_dim, in), Vec(hidden_dim)};
    fill(layer.weights, l == 0 ? 1.0 / static_cast<double>(input_dim) : hidden_bound);
    fill(layer.bias, 1.0 / std::sqrt(static_cast<double>(in)));
    m.backbone.push_back(std::move(layer));
  }
  for (std::size_t k = 0; k < n_heads; ++k) {
    Head h{Vec(hidden_dim), 0.0, k == 0 ? "base" : "head" + std::to_string(k)};
    fill(h.weights, hidden_bound);
    m.heads.push_back(std::move(h));
  }
  return m;
}

namespace detail {

inline void check_input(const Model& m, Eigen::Index rows) {
  if (static_cast<std::size_t>(rows) != m.input_dim)
    throw InputError("point has " + std::to_string(rows) + " coordinates, model expects " +
                     std::to_string(m.input_dim));
}

/// Activations of every layer for a batch; acts[0] is the input.
struct ForwardCache {
  std::vector<Mat> acts;
  std::vector<Mat> slopes;  // omega0 * cos(omega0 * z), per hidden layer
};

inline void forward_cached(const Model& m, const Eigen::Ref<const Mat>& x, ForwardCache& cache,
                           bool keep_slopes) {
  cache.acts.resize(m.depth + 1);
  cache.slopes.resize(keep_slopes ? m.depth : 0);
  cache.acts[0] = x;
  const double w0 = m.omega0;
  for (std::size_t l = 0; l < m.depth; ++l) {
    const auto& layer = m.backbone[l];
    Mat& z = cache.acts[l + 1];
    z.noalias() = layer.weights * cache.acts[l];
    z.colwise() += layer.bias;
    double* p = z.data();
    const Eigen::Index n = z.size();
    if (keep_slopes) {
      Mat& s = cache.slopes[l];
      s.resize(z.rows(), z.cols());
      double* q = s.data();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double arg = w0 * p[i];
        p[i] = std::sin(arg);
        q[i] = w0 * std::cos(arg);
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i) p[i] = std::sin(w0 * p[i]);
    }
  }
}

}  // namespace detail

/// Penultimate features for a batch, one column per point (D x N).
inline Mat features_batch(const Model& m, const Eigen::Ref<const Mat>& x) {
  detail::check_input(m, x.rows());
  detail::ForwardCache cache;
  detail::forward_cached(m, x, cache, false);
  return std::move(cache.acts.back());
}

inline Vec features(const Model& m, const Eigen::Ref<const Vec>& x) {
  detail::check_input(m, x.size());
  return features_batch(m, x);
}

inline Vec forward_batch(const Model& m, std::size_t head, const Eigen::Ref<const Mat>& x) {
  const Head& h = m.head(head);
  const Mat f = features_batch(m, x);
  Vec out = f.transpose() * h.weights;
  out.array() += h.bias;
  return out;
}

inline double forward(const Model& m, std::size_t head, const Eigen::Ref<const Vec>& x) {
  const Head& h = m.head(head);
  return h.weights.dot(features(m, x)) + h.bias;
}

/// Same shape as a Model's parameters.
struct Gradient {
  std::vector<Layer> backbone;
  std::vector<Head> heads;

  static Gradient zeros_like(const Model& m) {
    Gradient g;
    for (const auto& l : m.backbone)
      g.backbone.push_back({Mat::Zero(l.weights.rows(), l.weights.cols()), Vec::Zero(l.bias.size())});
    for (const auto& h : m.heads) g.heads.push_back({Vec::Zero(h.weights.size()), 0.0, h.label});
    return g;
  }
};

/// Calls fn(param_ref, grad_ref) over matching parameter blocks as flat spans.
template <typename ModelT, typename GradT, typename Fn>
void for_each_param(ModelT& m, GradT& g, Fn&& fn) {
  for (std::size_t l = 0; l < m.backbone.size(); ++l) {
    fn(std::span(m.backbone[l].weights.data(), static_cast<std::size_t>(m.backbone[l].weights.size())),
       std::span(g.backbone[l].weights.data(), static_cast<std::size_t>(g.backbone[l].weights.size())));
    fn(std::span(m.backbone[l].bias.data(), static_cast<std::size_t>(m.backbone[l].bias.size())),
       std::span(g.backbone[l].bias.data(), static_cast<std::size_t>(g.backbone[l].bias.size())));
  }
  for (std::size_t k = 0; k < m.heads.size(); ++k) {
    fn(std::span(m.heads[k].weights.data(), static_cast<std::size_t>(m.heads[k].weights.size())),
       std::span(g.heads[k].weights.data(), static_cast<std::size_t>(g.heads[k].weights.size())));
    fn(std::span(&m.heads[k].bias, 1), std::span(&g.heads[k].bias, 1));
  }
}

/// Loss = sum over the listed heads of mean squared error on the batch.
/// targets is B x head_ids.size(). If grad is non-null it is overwritten with
/// dLoss/dparams (zero for heads not listed).
inline double loss_and_gradient(const Model& m, const Eigen::Ref<const Mat>& x,
                                const Eigen::Ref<const Mat>& targets,
                                std::span<const std::size_t> head_ids, Gradient* grad) {
  detail::check_input(m, x.rows());
  const Eigen::Index batch = x.cols();
  if (targets.rows() != batch || static_cast<std::size_t>(targets.cols()) != head_ids.size())
    throw InputError("loss_and_gradient: targets must be batch x n_listed_heads");
  if (batch == 0) throw InputError("loss_and_gradient: empty batch");

  detail::ForwardCache cache;
  detail::forward_cached(m, x, cache, grad != nullptr);
  const Mat& feat = cache.acts.back();

  const double inv_b = 1.0 / static_cast<double>(batch);
  double loss = 0.0;
  Mat d_act;
  if (grad) {
    *grad = Gradient::zeros_like(m);
    d_act = Mat::Zero(static_cast<Eigen::Index>(m.hidden_dim), batch);
  }
  for (std::size_t c = 0; c < head_ids.size(); ++c) {
    const Head& h = m.head(head_ids[c]);
    Vec resid = feat.transpose() * h.weights;
    resid.array() += h.bias;
    resid -= targets.col(static_cast<Eigen::Index>(c));
    loss += resid.squaredNorm() * inv_b;
    if (grad) {
      const Vec d_out = (2.0 * inv_b) * resid;
      auto& gh = grad->heads[head_ids[c]];
      gh.weights.noalias() += feat * d_out;
      gh.bias += d_out.sum();
      d_act.noalias() += h.weights * d_out.transpose();
    }
  }
  if (!grad) return loss;

  for (std::size_t l = m.depth; l-- > 0;) {
    d_act.array() *= cache.slopes[l].array();  // now dLoss/dz
    auto& gl = grad->backbone[l];
    gl.weights.noalias() = d_act * cache.acts[l].transpose();
    gl.bias = d_act.rowwise().sum();
    if (l > 0) {
      Mat prev = m.backbone[l].weights.transpose() * d_act;
      d_act.swap(prev);
    }
  }
  return loss;
}

struct TrainConfig {
  std::int64_t epochs = 2000;
  std::size_t batch_size = 40960;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  std::size_t n_train_points = 10000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

/// Training rows: points is input_dim x N, targets is N x n_heads.
struct Dataset {
  Mat points;
  Mat targets;
};

struct TrainResult {
  Model model;
  std::vector<double> loss_history;  // mean batch loss per epoch
};

class Adam {
 public:
  Adam(const Model& m, double lr, double beta1, double beta2, double eps)
      : m_(Gradient::zeros_like(m)), v_(Gradient::zeros_like(m)),
        lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(Model& model, Gradient& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    // Walk parameters, gradient, first and second moments in lockstep.
    std::vector<std::span<double>> p, g, mm, vv;
    auto collect = [](std::vector<std::span<double>>& a, std::vector<std::span<double>>& b) {
      return [&a, &b](std::span<double> x, std::span<double> y) {
        a.push_back(x);
        b.push_back(y);
      };
    };
    for_each_param(model, grad, collect(p, g));
    for_each_param(m_, v_, collect(mm, vv));
    for (std::size_t blk = 0; blk < p.size(); ++blk) {
      for (std::size_t i = 0; i < p[blk].size(); ++i) {
        const double gi = g[blk][i];
        mm[blk][i] = b1_ * mm[blk][i] + (1.0 - b1_) * gi;
        vv[blk][i] = b2_ * vv[blk][i] + (1.0 - b2_) * gi * gi;
        const double mhat = mm[blk][i] / c1;
        const double vhat = vv[blk][i] / c2;
        p[blk][i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  Gradient m_, v_;
  double lr_, b1_, b2_, eps_;
  std::int64_t t_ = 0;
};

using EpochCallback = std::function<void(std::int64_t epoch, double loss)>;

inline TrainResult train(Model model, const Dataset& data, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  model.validate();
  const auto n = static_cast<std::size_t>(data.points.cols());
  if (n == 0) throw InputError("train: empty dataset");
  if (static_cast<std::size_t>(data.points.rows()) != model.input_dim)
    throw InputError("train: dataset point dimension does not match the model");
  if (static_cast<std::size_t>(data.targets.rows()) != n ||
      static_cast<std::size_t>(data.targets.cols()) != model.n_heads())
    throw InputError("train: every dataset row needs exactly one target per head");
  if (cfg.batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");

  std::vector<std::size_t> heads(model.n_heads());
  std::iota(heads.begin(), heads.end(), 0);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  Adam opt(model, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);

  TrainResult result;
  result.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));
  const std::size_t bs = std::min(cfg.batch_size, n);
  Mat xb, tb;
  Gradient grad;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (bs < n) std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t len = std::min(bs, n - start);
      if (bs == n) {
        total += loss_and_gradient(model, data.points, data.targets, heads, &grad);
      } else {
        xb.resize(data.points.rows(), static_cast<Eigen::Index>(len));
        tb.resize(static_cast<Eigen::Index>(len), data.targets.cols());
        for (std::size_t i = 0; i < len; ++i) {
          xb.col(static_cast<Eigen::Index>(i)) = data.points.col(order[start + i]);
          tb.row(static_cast<Eigen::Index>(i)) = data.targets.row(order[start + i]);
        }
        total += loss_and_gradient(model, xb, tb, heads, &grad);
      }
      ++batches;
      opt.step(model, grad);
    }
    const double mean = total / static_cast<double>(batches);
    if (!std::isfinite(mean))
      throw TrainingDiverged(epoch, "training diverged: non-finite loss at epoch " +
                                        std::to_string(epoch));
    result.loss_history.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  result.model = std::move(model);
  return result;
}

// Checkpoint container, all integers and floats little-endian:
//   char[8]  magic "GENIEv1\0"
//   u64      input_dim, hidden_dim, depth
//   f64      omega0
//   u64      n_heads
//   per head:  u64 label length, label bytes
//   per layer: f64 weights (row-major, D x in), f64 bias (D)
//   per head:  f64 weights (D), f64 bias
//   char[8]  end marker "GENIEEND"
inline constexpr char kCheckpointMagic[8] = {'G', 'E', 'N', 'I', 'E', 'v', '1', '\0'};
inline constexpr char kCheckpointEnd[8] = {'G', 'E', 'N', 'I', 'E', 'E', 'N', 'D'};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

class BinWriter {
 public:
  explicit BinWriter(std::ostream& os) : os_(os) {}
  void raw(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void f64s(const double* p, std::size_t n) { raw(p, 8 * n); }

 private:
  std::ostream& os_;
};

class BinReader {
 public:
  explicit BinReader(std::istream& is) : is_(is) {}
  void raw(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw FormatError("checkpoint truncated");
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
  void f64s(double* p, std::size_t n) { raw(p, 8 * n); }

 private:
  std::istream& is_;
};

}  // namespace detail

inline void write_model(std::ostream& os, const Model& m) {
  m.validate();
  detail::BinWriter w(os);
  w.raw(kCheckpointMagic, 8);
  w.u64(m.input_dim);
  w.u64(m.hidden_dim);
  w.u64(m.depth);
  w.f64(m.omega0);
  w.u64(m.heads.size());
  for (const auto& h : m.heads) {
    w.u64(h.label.size());
    w.raw(h.label.data(), h.label.size());
  }
  for (const auto& l : m.backbone) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = l.weights;
    w.f64s(rm.data(), static_cast<std::size_t>(rm.size()));
    w.f64s(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  for (const auto& h : m.heads) {
    w.f64s(h.weights.data(), static_cast<std::size_t>(h.weights.size()));
    w.f64(h.bias);
  }
  w.raw(kCheckpointEnd, 8);
}

inline Model read_model(std::istream& is) {
  detail::BinReader r(is);
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    if (std::memcmp(magic, "GENIE", 5) == 0)
      throw VersionError("unsupported checkpoint version tag '" +
                         std::string(magic + 5, strnlen(magic + 5, 3)) + "'");
    throw FormatError("not a checkpoint (bad magic)");
  }
  constexpr std::uint64_t kMaxDim = 1u << 20;
  Model m;
  m.input_dim = r.u64();
  m.hidden_dim = r.u64();
  m.depth = r.u64();
  m.omega0 = r.f64();
  const auto n_heads = r.u64();
  if (m.input_dim == 0 || m.hidden_dim == 0 || m.depth == 0 || n_heads == 0 ||
      m.input_dim > kMaxDim || m.hidden_dim > kMaxDim || m.depth > kMaxDim || n_heads > kMaxDim)
    throw FormatError("checkpoint header has implausible dimensions");
  m.heads.resize(n_heads);
  for (auto& h : m.heads) {
    const auto len = r.u64();
    if (len > 4096) throw FormatError("checkpoint head label too long");
    h.label.resize(len);
    r.raw(h.label.data(), len);
  }
  const auto d = static_cast<Eigen::Index>(m.hidden_dim);
  for (std::size_t l = 0; l < m.depth; ++l) {
    const auto in = static_cast<Eigen::Index>(l == 0 ? m.input_dim : m.hidden_dim);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(d, in);
    r.f64s(rm.data(), static_cast<std::size_t>(rm.size()));
    Layer layer{rm, Vec(d)};
    r.f64s(layer.bias.data(), static_cast<std::size_t>(d));
    m.backbone.push_back(std::move(layer));
  }
  for (auto& h : m.heads) {
    h.weights.resize(d);
    r.f64s(h.weights.data(), static_cast<std::size_t>(d));
    h.bias = r.f64();
  }
  char end[8];
  r.raw(end, 8);
  if (std::memcmp(end, kCheckpointEnd, 8) != 0) throw FormatError("checkpoint end marker missing");
  return m;
}

inline void save_model(const Model& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_model(os, m);
  if (!os) throw Error("write failed for '" + path + "'");
}

inline Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint '" + path + "'");
  try {
    return read_model(is);
  } catch (const FormatError& e) {
    if (dynamic_cast<const VersionError*>(&e)) throw VersionError(path + ": " + e.what());
    throw FormatError(path + ": " + e.what());
  }
}

// Head patch file: one head's parameters, applied to a checkpoint head.
//   char[8] "GENIEHP1", u64 D, u64 label length, label bytes,
//   f64 weights[D], f64 bias, char[8] end marker "GENIEEND"
inline constexpr char kHeadPatchMagic[8] = {'G', 'E', 'N', 'I', 'E', 'H', 'P', '1'};

inline void save_head_patch(const Head& h, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  detail::BinWriter w(os);
  w.raw(kHeadPatchMagic, 8);
  w.u64(static_cast<std::uint64_t>(h.weights.size()));
  w.u64(h.label.size());
  w.raw(h.label.data(), h.label.size());
  w.f64s(h.weights.data(), static_cast<std::size_t>(h.weights.size()));
  w.f64(h.bias);
  w.raw(kCheckpointEnd, 8);
  if (!os) throw Error("write failed for '" + path + "'");
}

inline Head load_head_patch(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open head patch '" + path + "'");
  detail::BinReader r(is);
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kHeadPatchMagic, 8) != 0) throw FormatError(path + ": not a head patch");
  const auto d = r.u64();
  const auto len = r.u64();
  if (d == 0 || d > (1u << 20) || len > 4096) throw FormatError(path + ": implausible head patch header");
  Head h;
  h.label.resize(len);
  r.raw(h.label.data(), len);
  h.weights.resize(static_cast<Eigen::Index>(d));
  r.f64s(h.weights.data(), d);
  h.bias = r.f64();
  char end[8];
  r.raw(end, 8);
  if (std::memcmp(end, kCheckpointEnd, 8) != 0) throw FormatError(path + ": end marker missing");
  return h;
}

/// Adds scale * patch to the given head in place.
inline void apply_head_patch(Model& m, std::size_t head, const Head& patch, double scale = 1.0) {
  Head& h = m.head(head);
  if (patch.weights.size() != h.weights.size())
    throw InputError("head patch width " + std::to_string(patch.weights.size()) + " != hidden_dim " +
                     std::to_string(h.weights.size()));
  h.weights += scale * patch.weights;
  h.bias += scale * patch.bias;
}

}  // namespace genie
