#ifndef TARNET_VAR_PROCESS_HPP
#define TARNET_VAR_PROCESS_HPP

#include "tarnet/random.hpp"
#include "tarnet/tensor.hpp"

#include <cstdint>

/// Vector autoregression y_t = A_1 y_{t-1} + ... + A_P y_{t-P} + e_t:
/// stationarity checks, spectral dependence measures and simulation.
namespace tarnet {

/// Lag weights stored as an N x N x P tensor; slice k-1 is A_k.
struct VarWeights {
  Tensor3 w;

  VarWeights() = default;
  explicit VarWeights(Tensor3 t);

  Index n() const { return w.dims().p1; }
  Index p() const { return w.dims().p3; }
  /// (A_1, ..., A_P), N x NP.
  Matrix unfolded() const { return unfold(w, 1); }
  static VarWeights from_unfolded(const Matrix& w, Index p);
  static VarWeights zeros(Index n, Index p) { return VarWeights(Tensor3({n, n, p})); }
};

struct NoiseSpec {
  Matrix covariance;
  std::uint64_t seed = 0;

  static NoiseSpec identity(Index n, std::uint64_t seed) { return {Matrix::Identity(n, n), seed}; }
};

struct SpectralSummary {
  double mu_min = 0.0;
  double mu_max = 0.0;
  double m_constant = 0.0;
  int grid_points = 0;
  bool stationary = true;  // false: values computed for non-stationary weights
};

/// NP x NP companion matrix: (A_1 ... A_P) on top, identities below.
Matrix companion_matrix(const VarWeights& w);
double spectral_radius(const Matrix& m);
double companion_radius(const VarWeights& w);

/// Spectral radius of the companion matrix below 1 - margin.
bool is_stationary(const VarWeights& w, double margin = 0.0);

/// c * w with the companion spectral radius within 1e-6 of target_radius.
VarWeights rescale_to_stationary(const VarWeights& w, double target_radius);

/// Extremes of the eigenvalues of A*(z)A(z), A(z) = I - sum_k A_k z^k,
/// over grid_points equally spaced points on the unit circle.
/// m_constant is filled for Sigma_e = I.
SpectralSummary spectral_mu(const VarWeights& w, int grid_points = 1024);

/// lambda_max(Sigma) mu_max / (lambda_min(Sigma) sqrt(mu_min)).
double dependence_constant(const SpectralSummary& mu, const Matrix& sigma_e);

/// Low-Tucker-rank weights: Gaussian core scaled so its mode-1 unfolding has
/// largest singular value core_gain, factors from leading singular vectors of
/// Gaussian matrices, then rescaled to companion radius 0.9.
VarWeights generate_low_tucker_weights(Index n, Index p, Ranks3 ranks, double core_gain, std::uint64_t seed);

/// Returns (t_effective + p) x N, time-major, after discarding burn_in steps
/// started from zeros. Throws NumericalError for non-stationary weights.
Matrix simulate_var(const VarWeights& w, const NoiseSpec& noise, Index t_effective, Index burn_in = 500);

/// Nonlinear data generator: the lag matrix X_t (N x P) is encoded as
/// E_t = L^T X_t R (r1 x r2), scaled by cos(1 / ||E_t||_F), and decoded by a
/// dense N x (r1 r2) map. The encoder/decoder are drawn from the seed and
/// the decoder is scaled so the linearized recursion has companion radius 0.9.
class NlDgp {
 public:
  NlDgp(Index n, Index p, Ranks3 ranks, std::uint64_t seed);

  Index n() const { return left_.rows(); }
  Index p() const { return right_.rows(); }

  /// One step without noise. linear=true drops the cosine factor.
  Vector step(const Matrix& lags, bool linear = false) const;
  /// Weights of the recursion with the cosine factor removed.
  VarWeights linear_weights() const;

  /// (t_effective + p) x N. Throws NumericalError if any value exceeds 1e6.
  Matrix generate(Index t_effective, Index burn_in, std::uint64_t noise_seed, bool linear = false) const;

 private:
  Matrix left_;     // N x r1
  Matrix right_;    // P x r2
  Matrix decoder_;  // N x (r1 r2)
};

Matrix generate_nl_dgp(Index n, Index p, Ranks3 ranks, Index t_effective, Index burn_in, std::uint64_t seed);

}  // namespace tarnet

#endif  // TARNET_VAR_PROCESS_HPP
