#include "tarnet/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tarnet {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0,1)");
  if (!(loss_drop_tolerance > 0.0)) throw std::invalid_argument("loss_drop_tolerance must be positive");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be at least 1");
  if (!(init_scale >= 0.0)) throw std::invalid_argument("init_scale must be nonnegative");
  if (divergence_restarts < 0) throw std::invalid_argument("divergence_restarts must be nonnegative");
}

DescentResult momentum_descent(const Objective& f, std::vector<double> theta, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t dim = theta.size();
  const std::vector<double> theta0 = theta;
  std::vector<double> grad(dim, 0.0);
  std::vector<double> velocity(dim, 0.0);

  DescentResult out;
  out.theta = theta;
  out.final_loss = INFINITY;
  out.learning_rate = cfg.learning_rate;
  double previous = NAN;
  long attempt_epoch = 0;
  for (long epoch = 0; epoch < cfg.max_epochs; ++epoch, ++attempt_epoch) {
    const double loss = f(theta, grad);
    out.loss_trace.push_back(loss);
    out.epochs = epoch + 1;
    if (epoch == 0) out.initial_loss = loss;
    bool finite = std::isfinite(loss);
    for (std::size_t i = 0; finite && i < dim; ++i) finite = std::isfinite(grad[i]);
    if (!finite) {
      out.diverged = true;
      if (out.restarts >= cfg.divergence_restarts) break;
      ++out.restarts;
      out.learning_rate *= 0.5;
      theta = theta0;
      std::fill(velocity.begin(), velocity.end(), 0.0);
      attempt_epoch = -1;
      continue;
    }
    out.diverged = false;
    if (loss < out.final_loss) {
      out.final_loss = loss;
      out.theta = theta;
    }
    if (attempt_epoch > 0 && std::abs(previous - loss) < cfg.loss_drop_tolerance) {
      out.converged = true;
      break;
    }
    previous = loss;
    for (std::size_t i = 0; i < dim; ++i) {
      velocity[i] = cfg.momentum * velocity[i] - out.learning_rate * grad[i];
      theta[i] += velocity[i];
    }
  }
  return out;
}

}  // namespace tarnet
