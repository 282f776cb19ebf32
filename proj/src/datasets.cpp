#include "gali/datasets.hpp"

#include <cmath>

namespace gali {

std::vector<std::pair<double, double>> Grid2D::centers() {
  static const double c[3] = {-0.6, 0.0, 0.6};
  std::vector<std::pair<double, double>> out;
  for (double cx : c)
    for (double cy : c) out.emplace_back(cx, cy);
  return out;
}

int Grid2D::component_of(double x, double y) {
  const auto cs = centers();
  int best = 0;
  double best_d = 1e300;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const double d = (x - cs[i].first) * (x - cs[i].first) + (y - cs[i].second) * (y - cs[i].second);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

Tensor Grid2D::sample(Rng& rng, int batch) const {
  const auto cs = centers();
  Tensor out({batch, 2});
  for (int i = 0; i < batch; ++i) {
    const int k = rng.uniform_int(0, static_cast<int>(cs.size()) - 1);
    out.at(i, 0) = cs[static_cast<std::size_t>(k)].first + stddev * rng.normal();
    out.at(i, 1) = cs[static_cast<std::size_t>(k)].second + stddev * rng.normal();
  }
  return out;
}

Bars8::Batch Bars8::sample(Rng& rng, int batch) const {
  Batch out;
  out.images = Tensor::full({batch, kSide * kSide}, -1.0);
  out.labels.resize(static_cast<std::size_t>(batch));
  // (r, c) pairs over {0,1,2}^2 minus (0,0), indexed 0..7 so the draw count
  // per image is fixed
  for (int b = 0; b < batch; ++b) {
    const int pair = rng.uniform_int(0, 7) + 1;  // skip (0,0)
    const int r = pair / 3, c = pair % 3;

    // distinct positions via partial Fisher-Yates
    int rows[kSide], cols[kSide];
    for (int i = 0; i < kSide; ++i) rows[i] = cols[i] = i;
    for (int i = 0; i < r; ++i) std::swap(rows[i], rows[rng.uniform_int(i, kSide - 1)]);
    for (int i = 0; i < c; ++i) std::swap(cols[i], cols[rng.uniform_int(i, kSide - 1)]);

    for (int i = 0; i < r; ++i)
      for (int j = 0; j < kSide; ++j) out.images.at(b, rows[i] * kSide + j) = 1.0;
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < kSide; ++j) out.images.at(b, j * kSide + cols[i]) = 1.0;

    out.labels[static_cast<std::size_t>(b)] = (r > 0 && c > 0) ? 2 : (r > 0 ? 0 : 1);
  }
  return out;
}

}  // namespace gali
