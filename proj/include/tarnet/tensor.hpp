#ifndef TARNET_TENSOR_HPP
#define TARNET_TENSOR_HPP

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <span>
#include <vector>

/// Dense matrix and third-order tensor algebra.
///
/// Conventions used throughout the library:
///  - Tensor3 stores its entries with the first index fastest.
///  - unfold(t, n) places index i_n on the rows; the remaining two indices
///    make up the column, lower-numbered mode fastest. With this ordering
///    the mode-1 unfolding of an N x N x P weight tensor whose k-th frontal
///    slice is A_k is the side-by-side block matrix (A_1, ..., A_P).
///  - vec() is column-major, consistent with the unfolding.
namespace tarnet {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Dims3 {
  Index p1 = 0;
  Index p2 = 0;
  Index p3 = 0;

  Index operator[](int mode) const;  // mode in {1,2,3}
  Index size() const { return p1 * p2 * p3; }
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

using Ranks3 = Dims3;

class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(Dims3 dims);
  Tensor3(Dims3 dims, std::vector<double> data);

  static Tensor3 zeros(Dims3 dims) { return Tensor3(dims); }

  const Dims3& dims() const { return dims_; }
  Index size() const { return dims_.size(); }

  double& operator()(Index i, Index j, Index k) {
    return data_[static_cast<std::size_t>(i + dims_.p1 * (j + dims_.p2 * k))];
  }
  double operator()(Index i, Index j, Index k) const {
    return data_[static_cast<std::size_t>(i + dims_.p1 * (j + dims_.p2 * k))];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// Frontal slice k as a p1 x p2 matrix.
  Matrix slice(Index k) const;
  void set_slice(Index k, const Matrix& m);

  Tensor3& operator*=(double c);
  friend Tensor3 operator*(double c, Tensor3 t) { return t *= c; }
  friend Tensor3 operator-(const Tensor3& a, const Tensor3& b);
  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  Dims3 dims_{};
  std::vector<double> data_;
};

struct TuckerFactors {
  Tensor3 core;
  Matrix u1;
  Matrix u2;
  Matrix u3;

  Ranks3 ranks() const { return core.dims(); }
  Dims3 dims() const { return {u1.rows(), u2.rows(), u3.rows()}; }
  /// Throws std::invalid_argument when factor shapes disagree with the core.
  void validate() const;
};

Matrix unfold(const Tensor3& t, int mode);
Tensor3 fold(const Matrix& m, int mode, Dims3 dims);

/// (t x_mode m): replaces dimension `mode` by m.rows().
Tensor3 mode_multiply(const Tensor3& t, const Matrix& m, int mode);

Matrix kronecker(const Matrix& a, const Matrix& b);

/// Column-major vectorization.
Vector vec(const Matrix& m);

/// core x_1 U1 x_2 U2 x_3 U3.
Tensor3 tucker_reconstruct(const TuckerFactors& f);

struct Svd {
  Matrix u;
  Vector s;
  Matrix v;
};

/// Thin SVD, m = u diag(s) v^T. Each left singular vector is signed so its
/// largest-magnitude entry is positive.
Svd thin_svd(const Matrix& m);

/// Count of singular values above rel_tol times the largest.
Index numerical_rank(const Vector& singular_values, double rel_tol = 1e-8);
Index numerical_rank(const Matrix& m, double rel_tol = 1e-8);
Ranks3 tucker_ranks(const Tensor3& t, double rel_tol = 1e-8);

TuckerFactors hosvd(const Tensor3& t, Ranks3 ranks);

double inner_product(const Tensor3& a, const Tensor3& b);
double frobenius_norm(const Tensor3& t);

}  // namespace tarnet

#endif  // TARNET_TENSOR_HPP
