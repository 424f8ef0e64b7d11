#ifndef TARNET_KERNELS_HPP
#define TARNET_KERNELS_HPP

#include "tarnet/tensor.hpp"

/// Data-parallel tensor kernels. Each kernel exists twice: a plain serial
/// loop nest that follows the textbook definition (kept as the reference
/// for tests and benchmarks) and an OpenMP version used by the library.
/// The OpenMP versions partition output entries only, so their results do
/// not depend on the number of threads.
namespace tarnet::kernels {

/// Worker cap from TARNET_THREADS (0 or unset: OpenMP default).
int configured_threads();
/// Applies configured_threads() to the OpenMP runtime. Idempotent.
void apply_thread_cap();

namespace serial {
Tensor3 mode_multiply(const Tensor3& t, const Matrix& m, int mode);
Matrix kronecker(const Matrix& a, const Matrix& b);
}  // namespace serial

namespace omp {
Tensor3 mode_multiply(const Tensor3& t, const Matrix& m, int mode);
Matrix kronecker(const Matrix& a, const Matrix& b);
}  // namespace omp

}  // namespace tarnet::kernels

#endif  // TARNET_KERNELS_HPP
