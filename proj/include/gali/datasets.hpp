#pragma once

#include <vector>

#include "gali/rng.hpp"
#include "gali/tensor.hpp"

namespace gali {

/// 9-component Gaussian mixture on the 3x3 grid {-0.6, 0, 0.6}^2.
struct Grid2D {
  double stddev = 0.05;
  Tensor sample(Rng& rng, int batch) const;  // [batch, 2]
  static std::vector<std::pair<double, double>> centers();
  static int component_of(double x, double y);  // nearest grid center
};

/// 8x8 images of full-length bars: r horizontal rows and c vertical columns
/// at +1 on a -1 background, (r, c) uniform over {0,1,2}^2 minus (0,0).
/// Labels: 0 = only horizontal, 1 = only vertical, 2 = both.
struct Bars8 {
  static constexpr int kSide = 8;
  static constexpr int kClasses = 3;

  struct Batch {
    Tensor images;  // [batch, 64], entries in {-1, +1}
    std::vector<int> labels;
  };

  Batch sample(Rng& rng, int batch) const;
};

}  // namespace gali
