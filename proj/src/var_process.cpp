#include "tarnet/var_process.hpp"

#include "tarnet/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tarnet {

VarWeights::VarWeights(Tensor3 t) : w(std::move(t)) {
  if (w.dims().p1 != w.dims().p2) throw std::invalid_argument("VAR weight tensor must be N x N x P");
}

VarWeights VarWeights::from_unfolded(const Matrix& m, Index p) {
  if (p < 1 || m.cols() != m.rows() * p) {
    throw std::invalid_argument("weight matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                " is not N x NP for P=" + std::to_string(p));
  }
  return VarWeights(fold(m, 1, {m.rows(), m.rows(), p}));
}

Matrix companion_matrix(const VarWeights& w) {
  const Index n = w.n();
  const Index p = w.p();
  Matrix c = Matrix::Zero(n * p, n * p);
  c.topRows(n) = w.unfolded();
  if (p > 1) c.bottomLeftCorner(n * (p - 1), n * (p - 1)).setIdentity();
  return c;
}

double spectral_radius(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, false);
  if (es.info() != Eigen::Success) throw NumericalError("eigenvalue computation failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double companion_radius(const VarWeights& w) { return spectral_radius(companion_matrix(w)); }

bool is_stationary(const VarWeights& w, double margin) {
  if (margin < 0.0 || margin >= 1.0) throw std::invalid_argument("stationarity margin must lie in [0,1)");
  return companion_radius(w) < 1.0 - margin;
}

VarWeights rescale_to_stationary(const VarWeights& w, double target_radius) {
  if (!(target_radius > 0.0 && target_radius < 1.0)) throw std::invalid_argument("target radius must lie in (0,1)");
  if (frobenius_norm(w.w) == 0.0) throw std::invalid_argument("cannot rescale a zero weight tensor");

  auto radius_at = [&](double c) { return companion_radius(VarWeights(c * w.w)); };
  double lo = 0.0;
  double hi = 1.0;
  while (radius_at(hi) < target_radius) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12) throw NumericalError("rescale_to_stationary: radius does not grow with scale");
  }
  double c = hi;
  for (int it = 0; it < 200; ++it) {
    c = 0.5 * (lo + hi);
    const double r = radius_at(c);
    if (std::abs(r - target_radius) < 1e-9) break;
    (r < target_radius ? lo : hi) = c;
  }
  return VarWeights(c * w.w);
}

SpectralSummary spectral_mu(const VarWeights& w, int grid_points) {
  if (grid_points < 64) throw std::invalid_argument("spectral_mu needs at least 64 grid points");
  const Index n = w.n();
  const Index p = w.p();
  std::vector<Matrix> slices;
  for (Index k = 0; k < p; ++k) slices.push_back(w.w.slice(k));

  double mu_min = std::numeric_limits<double>::infinity();
  double mu_max = 0.0;
  // min/max reductions are exact, so the result is independent of threading.
#pragma omp parallel for schedule(static) reduction(min : mu_min) reduction(max : mu_max) if (n * n * n * grid_points > 100000)
  for (int j = 0; j < grid_points; ++j) {
    const double theta = 2.0 * std::numbers::pi * j / grid_points;
    const std::complex<double> z = std::polar(1.0, theta);
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Identity(n, n);
    std::complex<double> zk = 1.0;
    for (Index k = 0; k < p; ++k) {
      zk *= z;
      a -= zk * slices[static_cast<std::size_t>(k)].cast<std::complex<double>>();
    }
    const Eigen::MatrixXcd h = a.adjoint() * a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
    mu_min = std::min(mu_min, es.eigenvalues().minCoeff());
    mu_max = std::max(mu_max, es.eigenvalues().maxCoeff());
  }

  SpectralSummary out;
  out.mu_min = mu_min;
  out.mu_max = mu_max;
  out.grid_points = grid_points;
  out.stationary = is_stationary(w);
  out.m_constant = mu_min > 0.0 ? mu_max / std::sqrt(mu_min) : std::numeric_limits<double>::infinity();
  return out;
}

double dependence_constant(const SpectralSummary& mu, const Matrix& sigma_e) {
  if (sigma_e.rows() != sigma_e.cols()) throw std::invalid_argument("noise covariance must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma_e, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(lmin > 0.0)) throw std::invalid_argument("noise covariance is not positive definite");
  if (!(mu.mu_min > 0.0)) throw std::invalid_argument("mu_min must be positive");
  return lmax * mu.mu_max / (lmin * std::sqrt(mu.mu_min));
}

namespace {

Matrix leading_left_singular_vectors(Rng& rng, Index dim, Index r) {
  return thin_svd(rng.normal_matrix(dim, dim)).u.leftCols(r);
}

Matrix noise_factor(const Matrix& covariance, Index n) {
  if (covariance.rows() != n || covariance.cols() != n) throw std::invalid_argument("noise covariance must be N x N");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("noise covariance is not symmetric");
  }
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("noise covariance is not positive definite");
  return llt.matrixL();
}

void check_divergence(const Vector& y, Index step) {
  for (Index i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y(i)) || std::abs(y(i)) > 1e6) {
      throw NumericalError("generated sequence diverged at step " + std::to_string(step) + " (variable " +
                           std::to_string(i + 1) + ")");
    }
  }
}

}  // namespace

VarWeights generate_low_tucker_weights(Index n, Index p, Ranks3 ranks, double core_gain, std::uint64_t seed) {
  const Dims3 dims{n, n, p};
  for (int mode = 1; mode <= 3; ++mode) {
    if (ranks[mode] < 1 || ranks[mode] > dims[mode]) {
      throw std::invalid_argument("rank r" + std::to_string(mode) + "=" + std::to_string(ranks[mode]) +
                                  " infeasible for dimension " + std::to_string(dims[mode]));
    }
  }
  // A core whose unfoldings have full row rank needs r_i <= r_j r_k.
  if (ranks.p1 > ranks.p2 * ranks.p3 || ranks.p2 > ranks.p1 * ranks.p3 || ranks.p3 > ranks.p1 * ranks.p2) {
    throw std::invalid_argument("Tucker ranks infeasible: each rank must not exceed the product of the other two");
  }
  if (!(core_gain > 0.0)) throw std::invalid_argument("core gain must be positive");

  Rng rng(seed);
  Rng core_rng = rng.split(0);
  Tensor3 core(ranks);
  for (double& v : core.data()) v = core_rng.normal();
  core *= core_gain / thin_svd(unfold(core, 1)).s(0);

  Rng factor_rng = rng.split(1);
  TuckerFactors f;
  f.core = std::move(core);
  f.u1 = leading_left_singular_vectors(factor_rng, n, ranks.p1);
  f.u2 = leading_left_singular_vectors(factor_rng, n, ranks.p2);
  f.u3 = leading_left_singular_vectors(factor_rng, p, ranks.p3);
  return rescale_to_stationary(VarWeights(tucker_reconstruct(f)), 0.9);
}

Matrix simulate_var(const VarWeights& w, const NoiseSpec& noise, Index t_effective, Index burn_in) {
  const Index n = w.n();
  const Index p = w.p();
  if (t_effective < 1 || burn_in < 0) throw std::invalid_argument("simulate_var: t_effective >= 1 and burn_in >= 0 required");
  if (!is_stationary(w)) throw NumericalError("simulate_var: weights are not stationary (companion radius >= 1)");
  const Matrix chol = noise_factor(noise.covariance, n);
  const Matrix wmat = w.unfolded();

  const Index total = burn_in + t_effective + p;
  Matrix hist = Matrix::Zero(n, total);
  Rng rng(noise.seed);
  Vector lags = Vector::Zero(n * p);
  for (Index t = 0; t < total; ++t) {
    for (Index k = 0; k < p; ++k) {
      lags.segment(k * n, n) = t - 1 - k >= 0 ? Vector(hist.col(t - 1 - k)) : Vector::Zero(n);
    }
    hist.col(t) = wmat * lags + chol * rng.normal_vector(n);
    check_divergence(hist.col(t), t);
  }
  return hist.rightCols(t_effective + p).transpose();
}

NlDgp::NlDgp(Index n, Index p, Ranks3 ranks, std::uint64_t seed) {
  if (ranks.p1 < 1 || ranks.p1 > n || ranks.p2 < 1 || ranks.p2 > p) {
    throw std::invalid_argument("NL-DGP encoder needs 1 <= r1 <= N and 1 <= r2 <= P");
  }
  Rng rng(seed);
  Rng enc = rng.split(0);
  left_ = leading_left_singular_vectors(enc, n, ranks.p1);
  right_ = leading_left_singular_vectors(enc, p, ranks.p2);
  Rng dec = rng.split(1);
  decoder_ = dec.normal_matrix(n, ranks.p1 * ranks.p2);

  const Matrix lin = decoder_ * kronecker(right_, left_).transpose();
  const VarWeights scaled = rescale_to_stationary(VarWeights::from_unfolded(lin, p), 0.9);
  // rescaling is a single scalar on the whole map, carry it to the decoder
  decoder_ *= scaled.unfolded().norm() / lin.norm();
}

Vector NlDgp::step(const Matrix& lags, bool linear) const {
  Matrix code = left_.transpose() * lags * right_;
  if (!linear) {
    const double norm = code.norm();
    if (norm > 0.0) code *= std::cos(1.0 / norm);
  }
  return decoder_ * vec(code);
}

VarWeights NlDgp::linear_weights() const {
  return VarWeights::from_unfolded(decoder_ * kronecker(right_, left_).transpose(), p());
}

Matrix NlDgp::generate(Index t_effective, Index burn_in, std::uint64_t noise_seed, bool linear) const {
  const Index n = this->n();
  const Index p = this->p();
  if (t_effective < 1 || burn_in < 0) throw std::invalid_argument("generate: t_effective >= 1 and burn_in >= 0 required");
  const Index total = burn_in + t_effective + p;
  Matrix hist = Matrix::Zero(n, total);
  Rng rng(noise_seed);
  Matrix lags = Matrix::Zero(n, p);
  for (Index t = 0; t < total; ++t) {
    for (Index k = 0; k < p; ++k) {
      lags.col(k) = t - 1 - k >= 0 ? Vector(hist.col(t - 1 - k)) : Vector::Zero(n);
    }
    hist.col(t) = step(lags, linear) + rng.normal_vector(n);
    check_divergence(hist.col(t), t);
  }
  return hist.rightCols(t_effective + p).transpose();
}

Matrix generate_nl_dgp(Index n, Index p, Ranks3 ranks, Index t_effective, Index burn_in, std::uint64_t seed) {
  const NlDgp dgp(n, p, ranks, derive_seed(seed, {0}));
  return dgp.generate(t_effective, burn_in, derive_seed(seed, {1}));
}

}  // namespace tarnet
