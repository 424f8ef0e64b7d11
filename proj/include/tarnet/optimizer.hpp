#ifndef TARNET_OPTIMIZER_HPP
#define TARNET_OPTIMIZER_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace tarnet {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double loss_drop_tolerance = 1e-8;
  long max_epochs = 10000;
  std::uint64_t seed = 0;
  double init_scale = 0.1;
  /// On a non-finite loss, restart from the initial point with half the
  /// learning rate, at most this many times (0: stop at the first one).
  int divergence_restarts = 6;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

/// Writes the gradient into `grad` and returns the loss at `theta`.
using Objective = std::function<double(std::span<const double> theta, std::span<double> grad)>;

struct DescentResult {
  std::vector<double> theta;  // best iterate seen
  double final_loss = 0.0;    // loss at `theta`
  double initial_loss = 0.0;
  long epochs = 0;
  std::vector<double> loss_trace;  // loss at the start of every epoch
  bool converged = false;
  bool diverged = false;  // the last attempt hit a non-finite loss
  int restarts = 0;
  double learning_rate = 0.0;  // rate of the last attempt
};

/// Full-batch gradient descent with classical momentum:
///   v <- momentum v - lr grad,  theta <- theta + v.
/// Stops when |loss_{e-1} - loss_e| < loss_drop_tolerance or after
/// max_epochs epochs in total. A non-finite loss triggers a restart with a
/// halved rate (see divergence_restarts). Returns the lowest-loss iterate.
DescentResult momentum_descent(const Objective& f, std::vector<double> theta0, const TrainConfig& cfg);

}  // namespace tarnet

#endif  // TARNET_OPTIMIZER_HPP
