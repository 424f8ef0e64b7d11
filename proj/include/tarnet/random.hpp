#ifndef TARNET_RANDOM_HPP
#define TARNET_RANDOM_HPP

#include "tarnet/tensor.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tarnet {

/// Mixes a master seed with a path of integers (cell index, replication,
/// stream tag, ...) into an independent child seed. splitmix64 finalizer.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

/// Seedable generator; child streams come from split() so that draws for
/// one purpose never shift the draws for another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  Rng split(std::uint64_t tag) const { return Rng(derive_seed(seed_, {tag})); }

  double normal() { return normal_(engine_); }
  Matrix normal_matrix(Index rows, Index cols, double sd = 1.0);
  Vector normal_vector(Index n, double sd = 1.0);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace tarnet

#endif  // TARNET_RANDOM_HPP
