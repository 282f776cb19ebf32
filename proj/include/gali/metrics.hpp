#pragma once

#include <optional>
#include <vector>

#include "gali/chains.hpp"
#include "gali/nets.hpp"
#include "gali/tensor.hpp"

namespace gali {

/// One evaluation snapshot; metrics that do not apply to a run are left unset
/// and serialize as empty CSV fields.
struct MetricsRow {
  long step = 0;
  std::optional<double> loss_d;
  std::optional<double> loss_ge;
  std::optional<double> pixel_mse;
  std::optional<double> feature_mse;
  std::optional<double> inpaint_pixel_mse;
  std::optional<double> inpaint_feature_mse;
  std::optional<double> frechet_toy;
  std::optional<double> probe_error;
  std::optional<double> energy_dist;
  std::optional<double> grad_ratio;
  std::optional<double> sigma_t;
};

double pixel_mse(const Tensor& x, const Tensor& recon);

/// MSE between the penultimate-layer features of x and recon.
double feature_mse(const FeatureNet& featnet, const Tensor& x, const Tensor& recon);

struct InpaintMse {
  double pixel = 0.0;  // averaged over masked pixels only
  std::optional<double> feature;  // on whole images
};
InpaintMse inpaint_mse(const Tensor& x, const Tensor& inpainted, const std::vector<Mask>& masks,
                       int side, const FeatureNet* featnet);

/// Trains a linear softmax classifier on the first train_count rows with
/// full-batch gradient descent (zero init, fixed schedule, no randomness) and
/// returns the misclassification rate on the remaining rows.
double linear_probe(const Tensor& features, const std::vector<int>& labels, int train_count,
                    int epochs);

/// Diagonal-covariance Frechet distance: per-dim squared mean gap plus
/// squared stddev gap, Gaussian moments fit per set.
double frechet_toy(const Tensor& feats_a, const Tensor& feats_b);

/// 2 E||a-b|| - E||a-a'|| - E||b-b'|| over all pairs (diagonal included).
double energy_distance(const Tensor& samples_a, const Tensor& samples_b);

/// Frozen bars8 classifier used for feature metrics and gali_pt: trained to
/// at least 95% accuracy on a held training sample, then frozen.
struct Bars8FeatureNet {
  ParamStore params;
  FeatureNet net;
  double train_accuracy = 0.0;

  Bars8FeatureNet() = default;
  Bars8FeatureNet(const Bars8FeatureNet&) = delete;
  Bars8FeatureNet& operator=(const Bars8FeatureNet&) = delete;
  Bars8FeatureNet(Bars8FeatureNet&&) = default;
  Bars8FeatureNet& operator=(Bars8FeatureNet&&) = default;
};

Bars8FeatureNet train_bars8_feature_net(std::uint64_t seed, int width = 32, int steps = 400,
                                        int batch = 256, double lr = 0.05);

/// Forward helpers on plain tensors (no gradients kept).
Tensor feature_forward(const FeatureNet& featnet, const Tensor& x);
double classify_accuracy(const FeatureNet& featnet, const Tensor& x, const std::vector<int>& labels);

}  // namespace gali
