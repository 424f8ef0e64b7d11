#include "tarnet/tensor.hpp"

#include "tarnet/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tarnet {

namespace {

void check_mode(int mode) {
  if (mode < 1 || mode > 3) throw std::invalid_argument("tensor mode must be 1, 2 or 3, got " + std::to_string(mode));
}

std::string dims_str(Dims3 d) {
  return "(" + std::to_string(d.p1) + "," + std::to_string(d.p2) + "," + std::to_string(d.p3) + ")";
}

}  // namespace

Index Dims3::operator[](int mode) const {
  check_mode(mode);
  return mode == 1 ? p1 : (mode == 2 ? p2 : p3);
}

Tensor3::Tensor3(Dims3 dims) : dims_(dims), data_(static_cast<std::size_t>(dims.size()), 0.0) {
  if (dims.p1 < 0 || dims.p2 < 0 || dims.p3 < 0) throw std::invalid_argument("negative tensor dimension");
}

Tensor3::Tensor3(Dims3 dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
  if (static_cast<Index>(data_.size()) != dims.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) + " does not match dims " +
                                dims_str(dims));
  }
}

Matrix Tensor3::slice(Index k) const {
  return Eigen::Map<const Matrix>(data_.data() + k * dims_.p1 * dims_.p2, dims_.p1, dims_.p2);
}

void Tensor3::set_slice(Index k, const Matrix& m) {
  if (m.rows() != dims_.p1 || m.cols() != dims_.p2) throw std::invalid_argument("slice shape mismatch");
  Eigen::Map<Matrix>(data_.data() + k * dims_.p1 * dims_.p2, dims_.p1, dims_.p2) = m;
}

Tensor3& Tensor3::operator*=(double c) {
  for (double& v : data_) v *= c;
  return *this;
}

Tensor3 operator-(const Tensor3& a, const Tensor3& b) {
  if (a.dims() != b.dims()) throw std::invalid_argument("tensor difference: dims " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
  Tensor3 out(a.dims());
  for (std::size_t i = 0; i < a.data_.size(); ++i) out.data_[i] = a.data_[i] - b.data_[i];
  return out;
}

void TuckerFactors::validate() const {
  const Ranks3 r = core.dims();
  if (u1.cols() != r.p1 || u2.cols() != r.p2 || u3.cols() != r.p3) {
    throw std::invalid_argument("Tucker factor columns do not match core dims " + dims_str(r));
  }
  if (r.p1 < 1 || r.p2 < 1 || r.p3 < 1) throw std::invalid_argument("Tucker ranks must be positive");
}

Matrix unfold(const Tensor3& t, int mode) {
  check_mode(mode);
  const Dims3 d = t.dims();
  if (mode == 1) {
    // Column index j + p2 k is exactly the storage order.
    return Eigen::Map<const Matrix>(t.data().data(), d.p1, d.p2 * d.p3);
  }
  if (mode == 2) {
    Matrix m(d.p2, d.p1 * d.p3);
    for (Index k = 0; k < d.p3; ++k)
      for (Index j = 0; j < d.p2; ++j)
        for (Index i = 0; i < d.p1; ++i) m(j, i + d.p1 * k) = t(i, j, k);
    return m;
  }
  Matrix m(d.p3, d.p1 * d.p2);
  for (Index k = 0; k < d.p3; ++k)
    for (Index j = 0; j < d.p2; ++j)
      for (Index i = 0; i < d.p1; ++i) m(k, i + d.p1 * j) = t(i, j, k);
  return m;
}

Tensor3 fold(const Matrix& m, int mode, Dims3 dims) {
  check_mode(mode);
  const Index rows = dims[mode];
  if (m.rows() != rows || m.cols() * rows != dims.size()) {
    throw std::invalid_argument("fold: " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                " matrix cannot be folded along mode " + std::to_string(mode) + " into " +
                                dims_str(dims));
  }
  Tensor3 t(dims);
  for (Index k = 0; k < dims.p3; ++k)
    for (Index j = 0; j < dims.p2; ++j)
      for (Index i = 0; i < dims.p1; ++i) {
        if (mode == 1) t(i, j, k) = m(i, j + dims.p2 * k);
        else if (mode == 2) t(i, j, k) = m(j, i + dims.p1 * k);
        else t(i, j, k) = m(k, i + dims.p1 * j);
      }
  return t;
}

Tensor3 mode_multiply(const Tensor3& t, const Matrix& m, int mode) {
  check_mode(mode);
  return kernels::omp::mode_multiply(t, m, mode);
}

Matrix kronecker(const Matrix& a, const Matrix& b) { return kernels::omp::kronecker(a, b); }

Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Tensor3 tucker_reconstruct(const TuckerFactors& f) {
  f.validate();
  return mode_multiply(mode_multiply(mode_multiply(f.core, f.u1, 1), f.u2, 2), f.u3, 3);
}

Svd thin_svd(const Matrix& m) {
  if (!m.allFinite()) throw std::invalid_argument("thin_svd: matrix has non-finite entries");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Svd out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  for (Index c = 0; c < out.u.cols(); ++c) {
    Index arg = 0;
    out.u.col(c).cwiseAbs().maxCoeff(&arg);
    if (out.u(arg, c) < 0.0) {
      out.u.col(c) *= -1.0;
      out.v.col(c) *= -1.0;
    }
  }
  return out;
}

Index numerical_rank(const Vector& s, double rel_tol) {
  if (s.size() == 0 || s(0) <= 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++r;
  return r;
}

Index numerical_rank(const Matrix& m, double rel_tol) { return numerical_rank(thin_svd(m).s, rel_tol); }

Ranks3 tucker_ranks(const Tensor3& t, double rel_tol) {
  return {numerical_rank(unfold(t, 1), rel_tol), numerical_rank(unfold(t, 2), rel_tol),
          numerical_rank(unfold(t, 3), rel_tol)};
}

TuckerFactors hosvd(const Tensor3& t, Ranks3 ranks) {
  const Dims3 d = t.dims();
  for (int mode = 1; mode <= 3; ++mode) {
    if (ranks[mode] < 1 || ranks[mode] > d[mode]) {
      throw std::invalid_argument("hosvd: rank " + std::to_string(ranks[mode]) + " invalid for mode " +
                                  std::to_string(mode) + " of size " + std::to_string(d[mode]));
    }
  }
  TuckerFactors f;
  f.u1 = thin_svd(unfold(t, 1)).u.leftCols(ranks.p1);
  f.u2 = thin_svd(unfold(t, 2)).u.leftCols(ranks.p2);
  f.u3 = thin_svd(unfold(t, 3)).u.leftCols(ranks.p3);
  f.core = mode_multiply(mode_multiply(mode_multiply(t, f.u1.transpose(), 1), f.u2.transpose(), 2),
                         f.u3.transpose(), 3);
  return f;
}

double inner_product(const Tensor3& a, const Tensor3& b) {
  if (a.dims() != b.dims()) throw std::invalid_argument("inner_product: dims " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
  double acc = 0.0;
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

double frobenius_norm(const Tensor3& t) { return std::sqrt(inner_product(t, t)); }

}  // namespace tarnet
