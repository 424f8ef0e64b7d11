#include "tarnet/tar_net.hpp"

#include "tarnet/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>

namespace tarnet {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + s + "' (relu|sigmoid|identity)");
}

std::string to_string(TarArch a) {
  switch (a) {
    case TarArch::tar: return "tar";
    case TarArch::tar2: return "tar2";
    case TarArch::ltar: return "ltar";
  }
  return "?";
}

void TarParams::validate() const {
  const Index n = u1.rows();
  if (u2.rows() != n) throw std::invalid_argument("TAR: U2 must have N rows");
  if (g1.rows() != u1.cols() || g1.cols() != u2.cols() * u3.cols()) {
    throw std::invalid_argument("TAR: F1 weights must be r1 x (r2 r3)");
  }
  if (bias.size() != 0 && bias.size() != n) throw std::invalid_argument("TAR: bias must have N entries");
}

TuckerFactors TarParams::tucker() const {
  const Ranks3 r = ranks();
  return {fold(g1, 1, r), u1, u2, u3};
}

void Tar2Params::validate() const {
  lane_a.validate();
  lane_b.validate();
  if (lane_a.n() != lane_b.n() || lane_a.p() != lane_b.p()) throw std::invalid_argument("TAR-2 lanes disagree on N or P");
  if (bias.size() != 0 && bias.size() != lane_a.n()) throw std::invalid_argument("TAR-2: bias must have N entries");
}

namespace {

template <typename M>
void activate(M&& m, Activation act) {
  switch (act) {
    case Activation::relu: m = m.cwiseMax(0.0); break;
    case Activation::sigmoid: m = (1.0 + (-m.array()).exp()).inverse().matrix(); break;
    case Activation::identity: break;
  }
}

/// g <- g * s'(a), with h = s(a).
template <typename G, typename A, typename H>
void backprop_activation(G&& g, const A& a, const H& h, Activation act) {
  switch (act) {
    case Activation::relu: g = (a.array() > 0.0).select(g, 0.0); break;
    case Activation::sigmoid: g = g.cwiseProduct(h.cwiseProduct((1.0 - h.array()).matrix())); break;
    case Activation::identity: break;
  }
}

struct LaneCache {
  Matrix a1, h1, a2, h2;
  Vector a3, h3;
};

Vector lane_forward(const TarParams& p, const Matrix& x, LaneCache& c) {
  if (x.rows() != p.n() || x.cols() != p.p()) throw std::invalid_argument("TAR forward: lag matrix must be N x P");
  const Activation act = p.activation;
  if (p.order == LaneOrder::column_first) {
    c.a1 = p.u2.transpose() * x;
    c.h1 = c.a1;
    activate(c.h1, act);
    c.a2 = c.h1 * p.u3;
  } else {
    c.a1 = x * p.u3;
    c.h1 = c.a1;
    activate(c.h1, act);
    c.a2 = p.u2.transpose() * c.h1;
  }
  c.h2 = c.a2;
  activate(c.h2, act);
  c.a3 = p.g1 * vec(c.h2);
  c.h3 = c.a3;
  if (p.activate_f1) activate(c.h3, act);
  return p.u1 * c.h3;
}

void lane_backward(const TarParams& p, const Matrix& x, const LaneCache& c, const Vector& upstream, TarGradients& g) {
  const Activation act = p.activation;
  g.u1 = upstream * c.h3.transpose();
  Vector g3 = p.u1.transpose() * upstream;
  if (p.activate_f1) backprop_activation(g3, c.a3, c.h3, act);
  g.g1 = g3 * vec(c.h2).transpose();
  const Vector gv = p.g1.transpose() * g3;
  Matrix ga2 = Eigen::Map<const Matrix>(gv.data(), c.a2.rows(), c.a2.cols());
  backprop_activation(ga2, c.a2, c.h2, act);
  if (p.order == LaneOrder::column_first) {
    g.u3 = c.h1.transpose() * ga2;
    Matrix ga1 = ga2 * p.u3.transpose();
    backprop_activation(ga1, c.a1, c.h1, act);
    g.u2 = x * ga1.transpose();
  } else {
    g.u2 = c.h1 * ga2.transpose();
    Matrix ga1 = p.u2 * ga2;
    backprop_activation(ga1, c.a1, c.h1, act);
    g.u3 = x.transpose() * ga1;
  }
}

}  // namespace

Vector tar_forward(const TarParams& p, const Matrix& x) {
  p.validate();
  LaneCache c;
  Vector out = lane_forward(p, x, c);
  if (p.bias.size() != 0) out += p.bias;
  return out;
}

Vector tar2_forward(const Tar2Params& p, const Matrix& x) {
  p.validate();
  LaneCache ca;
  LaneCache cb;
  Vector out = 0.5 * (lane_forward(p.lane_a, x, ca) + lane_forward(p.lane_b, x, cb));
  if (p.bias.size() != 0) out += p.bias;
  return out;
}

TarGradients tar_backward(const TarParams& p, const Matrix& x, const Vector& upstream) {
  p.validate();
  if (upstream.size() != p.n()) throw std::invalid_argument("TAR backward: upstream gradient must have N entries");
  LaneCache c;
  lane_forward(p, x, c);
  TarGradients g;
  lane_backward(p, x, c, upstream, g);
  g.bias = upstream;
  return g;
}

std::size_t TarSpec::lane_size() const { return layout::ltr_size(n, p, ranks); }

std::size_t TarSpec::size() const {
  return static_cast<std::size_t>(lanes()) * lane_size() + (with_bias ? static_cast<std::size_t>(n) : 0);
}

TarParams TarSpec::unpack_lane(std::span<const double> theta, int lane) const {
  if (theta.size() != size()) throw std::invalid_argument("TAR parameter vector has wrong length");
  const TuckerFactors f = layout::ltr_unpack(theta.subspan(static_cast<std::size_t>(lane) * lane_size(), lane_size()), n, p, ranks);
  TarParams out;
  out.u1 = f.u1;
  out.u2 = f.u2;
  out.u3 = f.u3;
  out.g1 = unfold(f.core, 1);
  out.activation = effective_activation();
  out.activate_f1 = activate_f1;
  out.order = lane == 0 ? LaneOrder::column_first : LaneOrder::row_first;
  return out;
}

Vector TarSpec::unpack_bias(std::span<const double> theta) const {
  if (!with_bias) return Vector::Zero(n);
  return Eigen::Map<const Vector>(theta.data() + lanes() * lane_size(), n);
}

TarParams TarSpec::unpack_tar(std::span<const double> theta) const {
  if (arch == TarArch::tar2) throw std::invalid_argument("TAR-2 parameters hold two lanes");
  TarParams out = unpack_lane(theta, 0);
  out.bias = unpack_bias(theta);
  return out;
}

Tar2Params TarSpec::unpack_tar2(std::span<const double> theta) const {
  if (arch != TarArch::tar2) throw std::invalid_argument("single-lane parameters are not TAR-2");
  return {unpack_lane(theta, 0), unpack_lane(theta, 1), unpack_bias(theta)};
}

Vector TarSpec::forward(std::span<const double> theta, const Matrix& x) const {
  return arch == TarArch::tar2 ? tar2_forward(unpack_tar2(theta), x) : tar_forward(unpack_tar(theta), x);
}

namespace {

void check_design(const TarSpec& spec, std::span<const double> theta, const DesignPair& d, std::span<double> grad) {
  if (d.n() != spec.n || d.p != spec.p) throw std::invalid_argument("TAR: design does not match network N/P");
  if (theta.size() != spec.size() || grad.size() != spec.size()) throw std::invalid_argument("TAR: parameter length mismatch");
  if (d.t() < 1) throw std::invalid_argument("TAR: empty design");
}

void write_lane_gradient(const TarGradients& g, std::span<double> dst) {
  double* ptr = dst.data();
  for (const Matrix* m : {&g.g1, &g.u1, &g.u2, &g.u3}) {
    std::copy(m->data(), m->data() + m->size(), ptr);
    ptr += m->size();
  }
}

}  // namespace

namespace kernels::serial {

double tar_loss_gradient(const TarSpec& spec, std::span<const double> theta, const DesignPair& d,
                         std::span<double> grad) {
  check_design(spec, theta, d, grad);
  const int lanes = spec.lanes();
  std::vector<TarParams> params;
  for (int l = 0; l < lanes; ++l) params.push_back(spec.unpack_lane(theta, l));
  const Vector bias = spec.unpack_bias(theta);
  const double scale = 1.0 / static_cast<double>(d.t());
  const double lane_weight = 1.0 / lanes;

  std::vector<TarGradients> acc(static_cast<std::size_t>(lanes));
  for (int l = 0; l < lanes; ++l) {
    const Ranks3 r = spec.ranks;
    acc[l] = {Matrix::Zero(spec.n, r.p1), Matrix::Zero(spec.n, r.p2), Matrix::Zero(spec.p, r.p3),
              Matrix::Zero(r.p1, r.p2 * r.p3), Vector::Zero(spec.n)};
  }
  Vector bias_grad = Vector::Zero(spec.n);
  double loss = 0.0;
  std::vector<LaneCache> caches(static_cast<std::size_t>(lanes));
  TarGradients g;
  for (Index t = 0; t < d.t(); ++t) {
    const Matrix x = d.lag_matrix(t);
    Vector out = bias;
    for (int l = 0; l < lanes; ++l) out += lane_weight * lane_forward(params[l], x, caches[l]);
    const Vector resid = out - d.y.col(t);
    loss += resid.squaredNorm();
    const Vector upstream = 2.0 * scale * resid;
    bias_grad += upstream;
    for (int l = 0; l < lanes; ++l) {
      lane_backward(params[l], x, caches[l], lane_weight * upstream, g);
      acc[l].u1 += g.u1;
      acc[l].u2 += g.u2;
      acc[l].u3 += g.u3;
      acc[l].g1 += g.g1;
    }
  }
  for (int l = 0; l < lanes; ++l) write_lane_gradient(acc[l], grad.subspan(l * spec.lane_size(), spec.lane_size()));
  if (spec.with_bias) std::copy(bias_grad.data(), bias_grad.data() + spec.n, grad.data() + lanes * spec.lane_size());
  return loss * scale;
}

}  // namespace kernels::serial

namespace {

constexpr Index kChunk = 64;

/// Batched lane: x is N x (P B) with sample b in columns [P b, P b + P).
struct BatchLane {
  const TarParams& p;
  Matrix a1, h1, a2, h2, a3, h3;

  void forward(const Eigen::Ref<const Matrix>& x, Index batch) {
    const Index np = p.p();
    const Index r2 = p.u2.cols();
    const Index r3 = p.u3.cols();
    const Index n = p.n();
    const Activation act = p.activation;
    if (p.order == LaneOrder::column_first) {
      a1.noalias() = p.u2.transpose() * x;  // r2 x (P B)
      h1 = a1;
      activate(h1, act);
      a2.resize(r2, r3 * batch);
      for (Index b = 0; b < batch; ++b) a2.middleCols(r3 * b, r3).noalias() = h1.middleCols(np * b, np) * p.u3;
    } else {
      a1.resize(n, r3 * batch);
      for (Index b = 0; b < batch; ++b) a1.middleCols(r3 * b, r3).noalias() = x.middleCols(np * b, np) * p.u3;
      h1 = a1;
      activate(h1, act);
      a2.noalias() = p.u2.transpose() * h1;  // r2 x (r3 B)
    }
    h2 = a2;
    activate(h2, act);
    a3.noalias() = p.g1 * Eigen::Map<const Matrix>(h2.data(), r2 * r3, batch);
    h3 = a3;
    if (p.activate_f1) activate(h3, act);
  }

  /// Adds this chunk's gradients into g (already sized).
  void backward(const Eigen::Ref<const Matrix>& x, Index batch, const Matrix& upstream, TarGradients& g) {
    const Index np = p.p();
    const Index r2 = p.u2.cols();
    const Index r3 = p.u3.cols();
    const Activation act = p.activation;
    g.u1.noalias() += upstream * h3.transpose();
    Matrix g3 = p.u1.transpose() * upstream;  // r1 x B
    if (p.activate_f1) backprop_activation(g3, a3, h3, act);
    g.g1.noalias() += g3 * Eigen::Map<const Matrix>(h2.data(), r2 * r3, batch).transpose();
    Matrix ga2(r2, r3 * batch);
    Eigen::Map<Matrix>(ga2.data(), r2 * r3, batch).noalias() = p.g1.transpose() * g3;
    backprop_activation(ga2, a2, h2, act);
    if (p.order == LaneOrder::column_first) {
      Matrix ga1(r2, np * batch);
      for (Index b = 0; b < batch; ++b) {
        g.u3.noalias() += h1.middleCols(np * b, np).transpose() * ga2.middleCols(r3 * b, r3);
        ga1.middleCols(np * b, np).noalias() = ga2.middleCols(r3 * b, r3) * p.u3.transpose();
      }
      backprop_activation(ga1, a1, h1, act);
      g.u2.noalias() += x * ga1.transpose();
    } else {
      g.u2.noalias() += h1 * ga2.transpose();
      Matrix ga1 = p.u2 * ga2;  // N x (r3 B)
      backprop_activation(ga1, a1, h1, act);
      for (Index b = 0; b < batch; ++b) {
        g.u3.noalias() += x.middleCols(np * b, np).transpose() * ga1.middleCols(r3 * b, r3);
      }
    }
  }
};

struct ChunkResult {
  double loss = 0.0;
  std::vector<TarGradients> lanes;
  Vector bias;
};

}  // namespace

namespace kernels::omp {

double tar_loss_gradient(const TarSpec& spec, std::span<const double> theta, const DesignPair& d,
                         std::span<double> grad) {
  check_design(spec, theta, d, grad);
  const int lanes = spec.lanes();
  std::vector<TarParams> params;
  for (int l = 0; l < lanes; ++l) params.push_back(spec.unpack_lane(theta, l));
  const Vector bias = spec.unpack_bias(theta);
  const double scale = 1.0 / static_cast<double>(d.t());
  const double lane_weight = 1.0 / lanes;
  const Index n = spec.n;
  const Index np = spec.p;
  const Ranks3 r = spec.ranks;
  const Index chunks = (d.t() + kChunk - 1) / kChunk;
  // x is NP x T column-major, i.e. N x (P T) with sample t in columns [P t, P t + P).
  const Eigen::Map<const Matrix> xall(d.x.data(), n, np * d.t());

  std::vector<ChunkResult> results(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(static) if (chunks > 1 && d.t() * n * r.p2 * np > 50000)
  for (Index c = 0; c < chunks; ++c) {
    const Index begin = c * kChunk;
    const Index batch = std::min(kChunk, d.t() - begin);
    const auto x = xall.middleCols(np * begin, np * batch);
    ChunkResult& res = results[static_cast<std::size_t>(c)];

    std::vector<BatchLane> lane_state;
    lane_state.reserve(static_cast<std::size_t>(lanes));
    Matrix out = bias.replicate(1, batch);
    for (int l = 0; l < lanes; ++l) {
      lane_state.push_back(BatchLane{params[l], {}, {}, {}, {}, {}, {}});
      lane_state.back().forward(x, batch);
      out.noalias() += lane_weight * (params[l].u1 * lane_state.back().h3);
    }
    const Matrix resid = out - d.y.middleCols(begin, batch);
    res.loss = resid.squaredNorm();
    const Matrix upstream = (2.0 * scale) * resid;
    res.bias = upstream.rowwise().sum();
    const Matrix lane_upstream = lane_weight * upstream;
    res.lanes.resize(static_cast<std::size_t>(lanes));
    for (int l = 0; l < lanes; ++l) {
      TarGradients& g = res.lanes[l];
      g.u1 = Matrix::Zero(n, r.p1);
      g.u2 = Matrix::Zero(n, r.p2);
      g.u3 = Matrix::Zero(np, r.p3);
      g.g1 = Matrix::Zero(r.p1, r.p2 * r.p3);
      lane_state[l].backward(x, batch, lane_upstream, g);
    }
  }

  // Fixed-order reduction over chunks.
  double loss = 0.0;
  std::vector<TarGradients> acc = results[0].lanes;
  Vector bias_grad = results[0].bias;
  loss += results[0].loss;
  for (std::size_t c = 1; c < results.size(); ++c) {
    loss += results[c].loss;
    bias_grad += results[c].bias;
    for (int l = 0; l < lanes; ++l) {
      acc[l].u1 += results[c].lanes[l].u1;
      acc[l].u2 += results[c].lanes[l].u2;
      acc[l].u3 += results[c].lanes[l].u3;
      acc[l].g1 += results[c].lanes[l].g1;
    }
  }
  for (int l = 0; l < lanes; ++l) write_lane_gradient(acc[l], grad.subspan(l * spec.lane_size(), spec.lane_size()));
  if (spec.with_bias) std::copy(bias_grad.data(), bias_grad.data() + n, grad.data() + lanes * spec.lane_size());
  return loss * scale;
}

}  // namespace kernels::omp

TarFit train_tar(const DesignPair& d, TarArch arch, Ranks3 ranks, const TrainConfig& cfg, bool with_bias,
                 Activation activation, bool activate_f1) {
  const auto start = std::chrono::steady_clock::now();
  const Index n = d.n();
  const Index p = d.p;
  if (ranks.p1 < 1 || ranks.p2 < 1 || ranks.p3 < 1 || ranks.p1 > n || ranks.p2 > n || ranks.p3 > p) {
    throw std::invalid_argument("TAR ranks must satisfy 1 <= r1,r2 <= N and 1 <= r3 <= P");
  }
  TarFit fit;
  fit.spec = {arch, n, p, ranks, activation, activate_f1, with_bias};
  const TarSpec& spec = fit.spec;

  std::vector<double> theta0(spec.size(), 0.0);
  Rng rng(cfg.seed);
  const std::size_t weights = static_cast<std::size_t>(spec.lanes()) * spec.lane_size();
  for (std::size_t i = 0; i < weights; ++i) theta0[i] = cfg.init_scale * rng.normal();

  // A single linear lane without bias is the LTR quadratic; its layout
  // matches, so use the sufficient-statistics objective.
  const bool quadratic = spec.lanes() == 1 && !with_bias && spec.effective_activation() == Activation::identity;
  std::optional<SufficientStats> stats;
  if (quadratic) stats = SufficientStats::from(d);
  const Objective f = [&](std::span<const double> th, std::span<double> g) {
    return quadratic ? ltr_objective(*stats, ranks, th, g) : kernels::omp::tar_loss_gradient(spec, th, d, g);
  };
  DescentResult res = momentum_descent(f, std::move(theta0), cfg);
  fit.theta = std::move(res.theta);

  FitReport& rep = fit.report;
  Tensor3 w({n, n, p});
  for (int l = 0; l < spec.lanes(); ++l) {
    Tensor3 lane_w = tucker_reconstruct(spec.unpack_lane(fit.theta, l).tucker());
    lane_w *= 1.0 / spec.lanes();
    for (Index i = 0; i < w.size(); ++i) w.data()[i] += lane_w.data()[i];
  }
  rep.weights = VarWeights(std::move(w));
  if (spec.lanes() == 1) rep.tucker = spec.unpack_lane(fit.theta, 0).tucker();
  rep.final_loss = res.final_loss;
  rep.initial_loss = res.initial_loss;
  rep.epochs_run = res.epochs;
  rep.loss_trace = std::move(res.loss_trace);
  rep.converged = res.converged;
  rep.diverged = res.diverged;
  rep.restarts = res.restarts;
  rep.seed = cfg.seed;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return fit;
}

}  // namespace tarnet
