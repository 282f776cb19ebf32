#pragma once

#include <cstdint>
#include <vector>

#include "gali/tensor.hpp"

namespace gali {

/// splitmix64-seeded xoshiro256++ with Box-Muller normals.
/// Value type: copy it to replay a draw sequence. Draw counters are kept so
/// tests can audit exactly how many draws an operation consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                  // [0, 1)
  double normal();                   // N(0,1); always consumes two u64 draws
  int uniform_int(int lo, int hi);   // inclusive bounds

  Tensor normal_tensor(std::vector<int> shape);
  Tensor uniform_tensor(std::vector<int> shape, double lo, double hi);

  std::uint64_t normal_draws() const { return normal_draws_; }
  std::uint64_t int_draws() const { return int_draws_; }

 private:
  std::uint64_t s_[4];
  std::uint64_t normal_draws_ = 0;
  std::uint64_t int_draws_ = 0;
};

}  // namespace gali
