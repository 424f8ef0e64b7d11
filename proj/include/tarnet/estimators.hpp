#ifndef TARNET_ESTIMATORS_HPP
#define TARNET_ESTIMATORS_HPP

#include "tarnet/optimizer.hpp"
#include "tarnet/tensor.hpp"
#include "tarnet/var_process.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

/// Linear autoregressive estimators: unconstrained least squares (OLS),
/// low matrix rank W = A B (LR) and low Tucker rank (LTR).
namespace tarnet {

/// Column t of x is (y_{t-1}; ...; y_{t-P}), column t of y is y_t.
struct DesignPair {
  Matrix x;  // NP x T
  Matrix y;  // N x T
  Index p = 0;
  Vector means;  // per-variable means removed from x and y (zeros if uncentered)

  Index n() const { return y.rows(); }
  Index t() const { return y.cols(); }
  /// Lag matrix X_t = (y_{t-1}, ..., y_{t-P}), N x P.
  Eigen::Map<const Matrix> lag_matrix(Index t) const { return {x.col(t).data(), n(), p}; }
};

/// `series` is time-major (rows are time points).
DesignPair build_design(const Matrix& series, Index p, bool center);

/// (1/T) sum_t ||y_t - W x_t||^2 with W = (A_1, ..., A_P).
double mse_loss(const Matrix& w, const DesignPair& d);

enum class ModelKind { ols, lr, ltr, tar, tar2 };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct LowRankFactors {
  Matrix a;  // N x r
  Matrix b;  // r x NP
};

struct FitReport {
  VarWeights weights;
  std::optional<TuckerFactors> tucker;
  std::optional<LowRankFactors> low_rank;
  double final_loss = 0.0;
  double initial_loss = 0.0;
  long epochs_run = 0;
  std::vector<double> loss_trace;
  bool converged = false;
  bool diverged = false;
  int restarts = 0;  // learning-rate halvings after divergence
  bool non_unique = false;  // OLS/LR: X X^T singular, minimum-norm solution returned
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
};

/// Second moments of a design; the quadratic loss and its gradient in W
/// only depend on these.
struct SufficientStats {
  Matrix sxx;  // X X^T / T
  Matrix syx;  // Y X^T / T
  double syy = 0.0;
  Index n = 0;
  Index p = 0;

  static SufficientStats from(const DesignPair& d);
  double loss(const Matrix& w) const;
  /// d loss / d W.
  Matrix gradient(const Matrix& w) const;
};

/// Flat parameter layouts used by the gradient-descent trainers.
/// LR: A (N x r) then B (r x NP), column-major.
/// LTR: core (first index fastest), U1, U2, U3, column-major.
namespace layout {
std::size_t lr_size(Index n, Index p, Index r);
LowRankFactors lr_unpack(std::span<const double> theta, Index n, Index p, Index r);
std::size_t ltr_size(Index n, Index p, Ranks3 ranks);
TuckerFactors ltr_unpack(std::span<const double> theta, Index n, Index p, Ranks3 ranks);
std::vector<double> ltr_pack(const TuckerFactors& f);
}  // namespace layout

double lr_objective(const SufficientStats& s, Index r, std::span<const double> theta, std::span<double> grad);
double ltr_objective(const SufficientStats& s, Ranks3 ranks, std::span<const double> theta, std::span<double> grad);

/// Gradient of the loss in the Tucker factors given the gradient g_w in the
/// mode-1 unfolded weights.
void tucker_chain_rule(const TuckerFactors& f, const Matrix& g_w, TuckerFactors& grad);

FitReport fit_ols(const DesignPair& d);
FitReport fit_lr(const DesignPair& d, Index r, const TrainConfig& cfg);
FitReport fit_ltr(const DesignPair& d, Ranks3 ranks, const TrainConfig& cfg);

/// ||W_hat - W_0||_F on the full weight tensors.
double estimation_error(const FitReport& fit, const VarWeights& truth);

/// OLS: N^2 P, LR: r(N + NP), LTR and TAR: r1 r2 r3 + N r1 + N r2 + P r3,
/// TAR-2: two independent TAR lanes. with_bias adds one shared N-vector.
/// For LR pass the rank in ranks.p1.
Index parameter_count(ModelKind kind, Index n, Index p, Ranks3 ranks, bool with_bias = false);

}  // namespace tarnet

#endif  // TARNET_ESTIMATORS_HPP
