#ifndef TARNET_TESTS_SUPPORT_HPP
#define TARNET_TESTS_SUPPORT_HPP

#include "tarnet/random.hpp"
#include "tarnet/tensor.hpp"

#include <cmath>
#include <filesystem>
#include <string>

#include <unistd.h>

namespace tarnet::testing {

inline Tensor3 random_tensor(Rng& rng, Dims3 d) {
  Tensor3 t(d);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

inline TuckerFactors random_tucker(Rng& rng, Dims3 dims, Ranks3 ranks) {
  return {random_tensor(rng, ranks), rng.normal_matrix(dims.p1, ranks.p1), rng.normal_matrix(dims.p2, ranks.p2),
          rng.normal_matrix(dims.p3, ranks.p3)};
}

inline double rel_diff(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

inline double rel_diff(const Tensor3& a, const Tensor3& b) {
  const double scale = std::max(frobenius_norm(a), frobenius_norm(b));
  return scale == 0.0 ? 0.0 : frobenius_norm(a - b) / scale;
}

// Element (i1, i2, i3) of a tensor read straight off its definition,
// the columns of an unfolding enumerated with the lower remaining mode
// fastest.
inline Matrix naive_unfold(const Tensor3& t, int mode) {
  const Dims3 d = t.dims();
  Matrix m(d[mode], d.size() / d[mode]);
  for (Index i = 0; i < d.p1; ++i)
    for (Index j = 0; j < d.p2; ++j)
      for (Index k = 0; k < d.p3; ++k) {
        if (mode == 1) m(i, j + d.p2 * k) = t(i, j, k);
        else if (mode == 2) m(j, i + d.p1 * k) = t(i, j, k);
        else m(k, i + d.p1 * j) = t(i, j, k);
      }
  return m;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("tarnet_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace tarnet::testing


#endif  // TARNET_TESTS_SUPPORT_HPP
