#include "tarnet/kernels.hpp"

#include <omp.h>

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace tarnet::kernels {

int configured_threads() {
  const char* env = std::getenv("TARNET_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  try {
    int n = std::stoi(env);
    return n > 0 ? n : 0;
  } catch (const std::exception&) {
    return 0;
  }
}

void apply_thread_cap() {
  if (int n = configured_threads(); n > 0) omp_set_num_threads(n);
}

namespace {

Dims3 product_dims(const Tensor3& t, const Matrix& m, int mode) {
  const Dims3 d = t.dims();
  if (m.cols() != d[mode]) {
    throw std::invalid_argument("mode_multiply: matrix has " + std::to_string(m.cols()) +
                                " columns, tensor mode " + std::to_string(mode) + " has size " +
                                std::to_string(d[mode]));
  }
  Dims3 out = d;
  if (mode == 1) out.p1 = m.rows();
  if (mode == 2) out.p2 = m.rows();
  if (mode == 3) out.p3 = m.rows();
  return out;
}

}  // namespace

namespace serial {

Tensor3 mode_multiply(const Tensor3& t, const Matrix& m, int mode) {
  const Dims3 out_dims = product_dims(t, m, mode);
  const Dims3 d = t.dims();
  Tensor3 out(out_dims);
  for (Index k = 0; k < out_dims.p3; ++k)
    for (Index j = 0; j < out_dims.p2; ++j)
      for (Index i = 0; i < out_dims.p1; ++i) {
        double acc = 0.0;
        for (Index s = 0; s < d[mode]; ++s) {
          if (mode == 1) acc += t(s, j, k) * m(i, s);
          if (mode == 2) acc += t(i, s, k) * m(j, s);
          if (mode == 3) acc += t(i, j, s) * m(k, s);
        }
        out(i, j, k) = acc;
      }
  return out;
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      for (Index k = 0; k < b.rows(); ++k)
        for (Index l = 0; l < b.cols(); ++l) out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

}  // namespace serial

namespace omp {

Tensor3 mode_multiply(const Tensor3& t, const Matrix& m, int mode) {
  const Dims3 out_dims = product_dims(t, m, mode);
  const Dims3 d = t.dims();
  Tensor3 out(out_dims);
  const Index inner = d[mode];
  const std::span<const double> src = t.data();
  std::span<double> dst = out.data();

  if (mode == 1) {
    // Each (j,k) fiber is a column of length p1: out_fiber = m * in_fiber.
    const Index fibers = d.p2 * d.p3;
#pragma omp parallel for schedule(static) if (fibers * m.rows() * inner > 20000)
    for (Index f = 0; f < fibers; ++f) {
      Eigen::Map<const Vector> in(src.data() + f * d.p1, d.p1);
      Eigen::Map<Vector> o(dst.data() + f * out_dims.p1, out_dims.p1);
      o.noalias() = m * in;
    }
  } else if (mode == 2) {
    // Frontal slice k: out_k (p1 x q) = in_k (p1 x p2) * m^T.
#pragma omp parallel for schedule(static) if (d.p3 * d.p1 * m.rows() * inner > 20000)
    for (Index k = 0; k < d.p3; ++k) {
      Eigen::Map<const Matrix> in(src.data() + k * d.p1 * d.p2, d.p1, d.p2);
      Eigen::Map<Matrix> o(dst.data() + k * out_dims.p1 * out_dims.p2, out_dims.p1, out_dims.p2);
      o.noalias() = in * m.transpose();
    }
  } else {
    // View as (p1 p2) x p3 and multiply by m^T on the right.
    const Index rows = d.p1 * d.p2;
    Eigen::Map<const Matrix> in(src.data(), rows, d.p3);
    Eigen::Map<Matrix> o(dst.data(), rows, out_dims.p3);
#pragma omp parallel for schedule(static) if (rows * m.rows() * inner > 20000)
    for (Index k = 0; k < out_dims.p3; ++k) {
      o.col(k).noalias() = in * m.row(k).transpose();
    }
  }
  return out;
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  const Index blocks = a.rows() * a.cols();
#pragma omp parallel for schedule(static) if (out.size() > 40000)
  for (Index blk = 0; blk < blocks; ++blk) {
    const Index i = blk % a.rows();
    const Index j = blk / a.rows();
    out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  }
  return out;
}

}  // namespace omp

}  // namespace tarnet::kernels
