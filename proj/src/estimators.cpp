#include "tarnet/estimators.hpp"

#include "tarnet/random.hpp"

#include <chrono>
#include <stdexcept>

namespace tarnet {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::ols: return "ols";
    case ModelKind::lr: return "lr";
    case ModelKind::ltr: return "ltr";
    case ModelKind::tar: return "tar";
    case ModelKind::tar2: return "tar2";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "ols") return ModelKind::ols;
  if (s == "lr") return ModelKind::lr;
  if (s == "ltr") return ModelKind::ltr;
  if (s == "tar") return ModelKind::tar;
  if (s == "tar2") return ModelKind::tar2;
  throw std::invalid_argument("unknown model kind '" + s + "'");
}

DesignPair build_design(const Matrix& series, Index p, bool center) {
  const Index len = series.rows();
  const Index n = series.cols();
  if (p < 1) throw std::invalid_argument("lag order must be at least 1");
  if (len <= p) {
    throw std::invalid_argument("series length " + std::to_string(len) + " must exceed lag order " + std::to_string(p));
  }
  DesignPair d;
  d.p = p;
  d.means = center ? Vector(series.colwise().mean().transpose()) : Vector::Zero(n);
  const Matrix centered = series.rowwise() - d.means.transpose();
  const Index t_count = len - p;
  d.x.resize(n * p, t_count);
  d.y.resize(n, t_count);
  for (Index t = 0; t < t_count; ++t) {
    const Index row = t + p;  // target row
    d.y.col(t) = centered.row(row).transpose();
    for (Index k = 0; k < p; ++k) d.x.col(t).segment(k * n, n) = centered.row(row - 1 - k).transpose();
  }
  return d;
}

double mse_loss(const Matrix& w, const DesignPair& d) {
  if (w.rows() != d.y.rows() || w.cols() != d.x.rows() || d.x.cols() != d.y.cols()) {
    throw std::invalid_argument("mse_loss: weight/design shape mismatch");
  }
  return (d.y - w * d.x).squaredNorm() / static_cast<double>(d.t());
}

SufficientStats SufficientStats::from(const DesignPair& d) {
  const double inv_t = 1.0 / static_cast<double>(d.t());
  SufficientStats s;
  s.sxx = d.x * d.x.transpose() * inv_t;
  s.syx = d.y * d.x.transpose() * inv_t;
  s.syy = d.y.squaredNorm() * inv_t;
  s.n = d.n();
  s.p = d.p;
  return s;
}

double SufficientStats::loss(const Matrix& w) const {
  return syy - 2.0 * w.cwiseProduct(syx).sum() + (w * sxx).cwiseProduct(w).sum();
}

Matrix SufficientStats::gradient(const Matrix& w) const { return 2.0 * (w * sxx - syx); }

namespace layout {

std::size_t lr_size(Index n, Index p, Index r) { return static_cast<std::size_t>(n * r + r * n * p); }

LowRankFactors lr_unpack(std::span<const double> theta, Index n, Index p, Index r) {
  if (theta.size() != lr_size(n, p, r)) throw std::invalid_argument("LR parameter vector has wrong length");
  LowRankFactors f;
  f.a = Eigen::Map<const Matrix>(theta.data(), n, r);
  f.b = Eigen::Map<const Matrix>(theta.data() + n * r, r, n * p);
  return f;
}

std::size_t ltr_size(Index n, Index p, Ranks3 r) {
  return static_cast<std::size_t>(r.size() + n * r.p1 + n * r.p2 + p * r.p3);
}

TuckerFactors ltr_unpack(std::span<const double> theta, Index n, Index p, Ranks3 r) {
  if (theta.size() != ltr_size(n, p, r)) throw std::invalid_argument("LTR parameter vector has wrong length");
  TuckerFactors f;
  const double* ptr = theta.data();
  f.core = Tensor3(r, std::vector<double>(ptr, ptr + r.size()));
  ptr += r.size();
  f.u1 = Eigen::Map<const Matrix>(ptr, n, r.p1);
  ptr += n * r.p1;
  f.u2 = Eigen::Map<const Matrix>(ptr, n, r.p2);
  ptr += n * r.p2;
  f.u3 = Eigen::Map<const Matrix>(ptr, p, r.p3);
  return f;
}

std::vector<double> ltr_pack(const TuckerFactors& f) {
  std::vector<double> out(f.core.data().begin(), f.core.data().end());
  for (const Matrix* m : {&f.u1, &f.u2, &f.u3}) out.insert(out.end(), m->data(), m->data() + m->size());
  return out;
}

}  // namespace layout

double lr_objective(const SufficientStats& s, Index r, std::span<const double> theta, std::span<double> grad) {
  const LowRankFactors f = layout::lr_unpack(theta, s.n, s.p, r);
  const Matrix w = f.a * f.b;
  const Matrix gw = s.gradient(w);
  Eigen::Map<Matrix>(grad.data(), s.n, r) = gw * f.b.transpose();
  Eigen::Map<Matrix>(grad.data() + s.n * r, r, s.n * s.p) = f.a.transpose() * gw;
  return s.loss(w);
}

void tucker_chain_rule(const TuckerFactors& f, const Matrix& g_w, TuckerFactors& grad) {
  const Dims3 dims = f.dims();
  const Tensor3 g = fold(g_w, 1, dims);
  const Matrix u1t = f.u1.transpose();
  const Matrix u2t = f.u2.transpose();
  const Matrix u3t = f.u3.transpose();
  // Shared partial contractions.
  const Tensor3 g1 = mode_multiply(g, u1t, 1);
  const Tensor3 g12 = mode_multiply(g1, u2t, 2);
  grad.core = mode_multiply(g12, u3t, 3);
  grad.u1 = unfold(mode_multiply(mode_multiply(g, u2t, 2), u3t, 3), 1) * unfold(f.core, 1).transpose();
  grad.u2 = unfold(mode_multiply(g1, u3t, 3), 2) * unfold(f.core, 2).transpose();
  grad.u3 = unfold(g12, 3) * unfold(f.core, 3).transpose();
}

double ltr_objective(const SufficientStats& s, Ranks3 ranks, std::span<const double> theta, std::span<double> grad) {
  const TuckerFactors f = layout::ltr_unpack(theta, s.n, s.p, ranks);
  const Matrix w = unfold(tucker_reconstruct(f), 1);
  TuckerFactors g;
  tucker_chain_rule(f, s.gradient(w), g);
  const std::vector<double> flat = layout::ltr_pack(g);
  std::copy(flat.begin(), flat.end(), grad.begin());
  return s.loss(w);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<double> initial_parameters(std::size_t size, const TrainConfig& cfg) {
  Rng rng(cfg.seed);
  std::vector<double> theta(size);
  for (double& v : theta) v = cfg.init_scale * rng.normal();
  return theta;
}

void copy_descent(const DescentResult& res, FitReport& rep) {
  rep.initial_loss = res.initial_loss;
  rep.epochs_run = res.epochs;
  rep.loss_trace = res.loss_trace;
  rep.converged = res.converged;
  rep.diverged = res.diverged;
  rep.restarts = res.restarts;
}

}  // namespace

FitReport fit_ols(const DesignPair& d) {
  const auto start = std::chrono::steady_clock::now();
  if (d.t() < 1) throw std::invalid_argument("fit_ols needs at least one design pair");
  // Minimum-norm least squares for X^T W^T = Y^T.
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(d.x.transpose());
  const Matrix w = cod.solve(d.y.transpose()).transpose();
  FitReport rep;
  rep.weights = VarWeights::from_unfolded(w, d.p);
  rep.non_unique = cod.rank() < d.x.rows();
  rep.final_loss = mse_loss(w, d);
  rep.initial_loss = mse_loss(Matrix::Zero(w.rows(), w.cols()), d);
  rep.converged = true;
  rep.wall_seconds = seconds_since(start);
  return rep;
}

FitReport fit_lr(const DesignPair& d, Index r, const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const Index n = d.n();
  const Index p = d.p;
  if (r < 1 || r > std::min(n, n * p)) throw std::invalid_argument("LR rank " + std::to_string(r) + " out of range [1, N]");
  const SufficientStats stats = SufficientStats::from(d);
  const Objective f = [&](std::span<const double> th, std::span<double> g) { return lr_objective(stats, r, th, g); };
  const DescentResult res = momentum_descent(f, initial_parameters(layout::lr_size(n, p, r), cfg), cfg);

  FitReport rep;
  LowRankFactors fac = layout::lr_unpack(res.theta, n, p, r);
  const Matrix w = fac.a * fac.b;
  rep.weights = VarWeights::from_unfolded(w, p);
  rep.low_rank = std::move(fac);
  copy_descent(res, rep);
  rep.final_loss = mse_loss(w, d);
  rep.non_unique = d.t() < n * p;
  rep.seed = cfg.seed;
  rep.wall_seconds = seconds_since(start);
  return rep;
}

FitReport fit_ltr(const DesignPair& d, Ranks3 ranks, const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const Index n = d.n();
  const Index p = d.p;
  if (ranks.p1 < 1 || ranks.p2 < 1 || ranks.p3 < 1 || ranks.p1 > n || ranks.p2 > n || ranks.p3 > p) {
    throw std::invalid_argument("LTR ranks must satisfy 1 <= r1,r2 <= N and 1 <= r3 <= P");
  }
  const SufficientStats stats = SufficientStats::from(d);
  const Objective f = [&](std::span<const double> th, std::span<double> g) { return ltr_objective(stats, ranks, th, g); };
  const DescentResult res = momentum_descent(f, initial_parameters(layout::ltr_size(n, p, ranks), cfg), cfg);

  FitReport rep;
  TuckerFactors fac = layout::ltr_unpack(res.theta, n, p, ranks);
  rep.weights = VarWeights(tucker_reconstruct(fac));
  rep.tucker = std::move(fac);
  copy_descent(res, rep);
  rep.final_loss = mse_loss(rep.weights.unfolded(), d);
  rep.seed = cfg.seed;
  rep.wall_seconds = seconds_since(start);
  return rep;
}

double estimation_error(const FitReport& fit, const VarWeights& truth) {
  return frobenius_norm(fit.weights.w - truth.w);
}

Index parameter_count(ModelKind kind, Index n, Index p, Ranks3 ranks, bool with_bias) {
  const Index bias = with_bias ? n : 0;
  const Index tucker = ranks.p1 * ranks.p2 * ranks.p3 + n * ranks.p1 + n * ranks.p2 + p * ranks.p3;
  switch (kind) {
    case ModelKind::ols: return n * n * p + bias;
    case ModelKind::lr: return ranks.p1 * (n + n * p) + bias;
    case ModelKind::ltr:
    case ModelKind::tar: return tucker + bias;
    case ModelKind::tar2: return 2 * tucker + bias;
  }
  return 0;
}

}  // namespace tarnet
