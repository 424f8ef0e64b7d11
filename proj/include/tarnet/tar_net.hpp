#ifndef TARNET_TAR_NET_HPP
#define TARNET_TAR_NET_HPP

#include "tarnet/estimators.hpp"
#include "tarnet/optimizer.hpp"
#include "tarnet/tensor.hpp"

#include <span>
#include <string>
#include <vector>

/// Tucker autoregressive networks.
///
/// One lane maps the N x P lag matrix X through
///   C1  h1 = s(U2^T X)          r2 maps of length P   (N x 1 convolutions)
///   C2  h2 = s(h1 U3)           r2 r3 features         (1 x P convolutions)
///   F1  h3 = s(G1 vec(h2))      r1 features
///   OUT y  = U1 h3 + b          linear readout
/// With the identity activation this is U1 G1 (U3 (x) U2)^T vec(X), the
/// low-Tucker-rank linear map. The row-first lane applies the 1 x P
/// convolutions before the N x 1 ones. TAR-2 averages a column-first lane
/// and a row-first lane, both with their own parameters, and adds one bias.
namespace tarnet {

enum class Activation { relu, sigmoid, identity };
enum class LaneOrder { column_first, row_first };
enum class TarArch { tar, tar2, ltar };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
std::string to_string(TarArch a);

struct TarParams {
  Matrix u1;  // N x r1, OUTPUT
  Matrix u2;  // N x r2, C1 kernels
  Matrix u3;  // P x r3, C2 kernels
  Matrix g1;  // r1 x (r2 r3), F1
  Vector bias;  // N, zero when the network has no bias
  Activation activation = Activation::relu;
  bool activate_f1 = true;  // apply the activation after F1 as well as C1/C2
  LaneOrder order = LaneOrder::column_first;

  Index n() const { return u1.rows(); }
  Index p() const { return u3.rows(); }
  Ranks3 ranks() const { return {u1.cols(), u2.cols(), u3.cols()}; }
  void validate() const;
  /// Tucker factors of the lane's linear map (core = fold(g1)).
  TuckerFactors tucker() const;
};

struct Tar2Params {
  TarParams lane_a;  // column first
  TarParams lane_b;  // row first
  Vector bias;

  Index n() const { return lane_a.n(); }
  Index p() const { return lane_a.p(); }
  void validate() const;
};

struct TarGradients {
  Matrix u1;
  Matrix u2;
  Matrix u3;
  Matrix g1;
  Vector bias;
};

/// x is the N x P lag matrix (y_{t-1}, ..., y_{t-P}).
Vector tar_forward(const TarParams& p, const Matrix& x);
Vector tar2_forward(const Tar2Params& p, const Matrix& x);

/// Parameter gradients for one sample given upstream = d loss / d output.
/// ReLU subgradient at zero is 0.
TarGradients tar_backward(const TarParams& p, const Matrix& x, const Vector& upstream);

/// Shape of a trainable network; fixes the flat parameter layout:
/// per lane [g1, u1, u2, u3] (column-major, the same order as the LTR
/// layout), lane b after lane a for TAR-2, then the bias when present.
struct TarSpec {
  TarArch arch = TarArch::tar;
  Index n = 0;
  Index p = 0;
  Ranks3 ranks{};
  Activation activation = Activation::relu;
  bool activate_f1 = true;
  bool with_bias = false;

  int lanes() const { return arch == TarArch::tar2 ? 2 : 1; }
  Activation effective_activation() const { return arch == TarArch::ltar ? Activation::identity : activation; }
  std::size_t lane_size() const;
  std::size_t size() const;

  TarParams unpack_lane(std::span<const double> theta, int lane) const;
  Vector unpack_bias(std::span<const double> theta) const;
  Tar2Params unpack_tar2(std::span<const double> theta) const;
  TarParams unpack_tar(std::span<const double> theta) const;
  Vector forward(std::span<const double> theta, const Matrix& x) const;
};

/// Mean squared loss (1/T) sum ||y_t - f(X_t)||^2 and its gradient.
/// serial: per-sample reference built on tar_forward/tar_backward.
/// omp: batched over fixed 64-sample chunks reduced in chunk order, so
/// the result does not depend on the thread count.
namespace kernels::serial {
double tar_loss_gradient(const TarSpec& spec, std::span<const double> theta, const DesignPair& d,
                         std::span<double> grad);
}
namespace kernels::omp {
double tar_loss_gradient(const TarSpec& spec, std::span<const double> theta, const DesignPair& d,
                         std::span<double> grad);
}

struct TarFit {
  FitReport report;  // weights: mean of the lanes' Tucker reconstructions
  TarSpec spec;
  std::vector<double> theta;

  TarParams tar() const { return spec.unpack_tar(theta); }
  Tar2Params tar2() const { return spec.unpack_tar2(theta); }
};

/// Trains with the shared momentum loop. arch=ltar uses the identity
/// activation; activation and activate_f1 are ignored for it.
TarFit train_tar(const DesignPair& d, TarArch arch, Ranks3 ranks, const TrainConfig& cfg, bool with_bias,
                 Activation activation = Activation::relu, bool activate_f1 = true);

}  // namespace tarnet

#endif  // TARNET_TAR_NET_HPP
