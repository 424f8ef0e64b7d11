#include "tarnet/random.hpp"

namespace tarnet {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

Matrix Rng::normal_matrix(Index rows, Index cols, double sd) {
  Matrix m(rows, cols);
  // Column-major fill order is part of the reproducibility contract.
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = sd * normal();
  return m;
}

Vector Rng::normal_vector(Index n, double sd) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = sd * normal();
  return v;
}

}  // namespace tarnet
