#include "gali/metrics.hpp"

#include <cmath>

#include "gali/datasets.hpp"

namespace gali {

double pixel_mse(const Tensor& x, const Tensor& recon) {
  require_same_shape(x, recon, "pixel_mse");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - recon[i];
    s += d * d;
  }
  return s / static_cast<double>(x.size());
}

Tensor feature_forward(const FeatureNet& featnet, const Tensor& x) {
  Tape t;
  return t.value(featnet.features(t, t.constant(x)));
}

double feature_mse(const FeatureNet& featnet, const Tensor& x, const Tensor& recon) {
  return pixel_mse(feature_forward(featnet, x), feature_forward(featnet, recon));
}

InpaintMse inpaint_mse(const Tensor& x, const Tensor& inpainted, const std::vector<Mask>& masks,
                       int side, const FeatureNet* featnet) {
  require_same_shape(x, inpainted, "inpaint_mse");
  if (x.rows() != static_cast<int>(masks.size()))
    throw ShapeError("inpaint_mse: one mask per batch row required");
  const auto sel = mask_selector(masks, side);
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!sel[i]) continue;
    const double d = x[i] - inpainted[i];
    s += d * d;
    ++count;
  }
  InpaintMse out;
  out.pixel = count ? s / static_cast<double>(count) : 0.0;
  if (featnet) out.feature = feature_mse(*featnet, x, inpainted);
  return out;
}

double linear_probe(const Tensor& features, const std::vector<int>& labels, int train_count,
                    int epochs) {
  const int n = features.rows(), f = features.cols();
  if (static_cast<int>(labels.size()) != n) throw ShapeError("linear_probe: one label per row");
  if (train_count <= 0 || train_count >= n)
    throw ShapeError("linear_probe: split must leave both train and test rows");
  int classes = 0;
  for (int l : labels) classes = std::max(classes, l + 1);

  Tensor train({train_count, f});
  for (int i = 0; i < train_count; ++i)
    for (int j = 0; j < f; ++j) train.at(i, j) = features.at(i, j);

  ParamStore store;
  Parameter& w = store.add("probe.W", Tensor({classes, f}));
  Parameter& b = store.add("probe.b", Tensor({classes}));

  // one-hot selector; mean(lsm * pick) * classes recovers mean log p_true
  Tensor pick({train_count, classes});
  for (int i = 0; i < train_count; ++i) pick.at(i, labels[static_cast<std::size_t>(i)]) = 1.0;

  const double lr = 0.5;
  for (int e = 0; e < epochs; ++e) {
    Tape t;
    Var logits = t.add_row(t.matmul_nt(t.constant(train), t.param(w)), t.param(b));
    Var loss = t.scale(t.mean_all(t.mul(t.log_softmax_rows(logits), t.constant(pick))),
                       -static_cast<double>(classes));
    store.zero_grads();
    t.backward(loss);
    for (auto& [name, p] : store.entries())
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
  }

  // test error
  int wrong = 0;
  const int test_n = n - train_count;
  for (int i = 0; i < test_n; ++i) {
    int best = 0;
    double best_v = -1e300;
    for (int cjs = 0; cjs < classes; ++cjs) {
      double v = b.value[static_cast<std::size_t>(cjs)];
      for (int j = 0; j < f; ++j) v += w.value.at(cjs, j) * features.at(train_count + i, j);
      if (v > best_v) {
        best_v = v;
        best = cjs;
      }
    }
    if (best != labels[static_cast<std::size_t>(train_count + i)]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(test_n);
}

double frechet_toy(const Tensor& feats_a, const Tensor& feats_b) {
  if (feats_a.cols() != feats_b.cols()) throw ShapeError("frechet_toy: feature dims disagree");
  const int f = feats_a.cols();
  double out = 0.0;
  for (int j = 0; j < f; ++j) {
    double ma = 0.0, mb = 0.0;
    for (int i = 0; i < feats_a.rows(); ++i) ma += feats_a.at(i, j);
    for (int i = 0; i < feats_b.rows(); ++i) mb += feats_b.at(i, j);
    ma /= feats_a.rows();
    mb /= feats_b.rows();
    double va = 0.0, vb = 0.0;
    for (int i = 0; i < feats_a.rows(); ++i) va += (feats_a.at(i, j) - ma) * (feats_a.at(i, j) - ma);
    for (int i = 0; i < feats_b.rows(); ++i) vb += (feats_b.at(i, j) - mb) * (feats_b.at(i, j) - mb);
    va = std::sqrt(va / feats_a.rows());
    vb = std::sqrt(vb / feats_b.rows());
    out += (ma - mb) * (ma - mb) + (va - vb) * (va - vb);
  }
  return out;
}

namespace {

double mean_pair_dist(const Tensor& a, const Tensor& b) {
  const int f = a.cols();
  double s = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.rows(); ++j) {
      double d2 = 0.0;
      for (int k = 0; k < f; ++k) {
        const double d = a.at(i, k) - b.at(j, k);
        d2 += d * d;
      }
      s += std::sqrt(d2);
    }
  return s / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

}  // namespace

double energy_distance(const Tensor& samples_a, const Tensor& samples_b) {
  if (samples_a.cols() != samples_b.cols()) throw ShapeError("energy_distance: dims disagree");
  return 2.0 * mean_pair_dist(samples_a, samples_b) - mean_pair_dist(samples_a, samples_a) -
         mean_pair_dist(samples_b, samples_b);
}

Bars8FeatureNet train_bars8_feature_net(std::uint64_t seed, int width, int steps, int batch,
                                        double lr) {
  Bars8FeatureNet out;
  Rng rng(seed);
  out.net = make_feature_net(out.params, Bars8::kSide * Bars8::kSide, width, Bars8::kClasses, rng);
  out.net.frozen = false;

  Bars8 data;
  const auto train = data.sample(rng, batch);
  Tensor pick({batch, Bars8::kClasses});
  for (int i = 0; i < batch; ++i) pick.at(i, train.labels[static_cast<std::size_t>(i)]) = 1.0;

  for (int s = 0; s < steps; ++s) {
    Tape t;
    Var logits = out.net.logits(t, t.constant(train.images), true);
    Var loss = t.scale(t.mean_all(t.mul(t.log_softmax_rows(logits), t.constant(pick))),
                       -static_cast<double>(Bars8::kClasses));
    out.params.zero_grads();
    t.backward(loss);
    for (auto& [name, p] : out.params.entries())
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
  }
  out.net.frozen = true;
  out.train_accuracy = classify_accuracy(out.net, train.images, train.labels);
  return out;
}

double classify_accuracy(const FeatureNet& featnet, const Tensor& x, const std::vector<int>& labels) {
  Tape t;
  const Tensor logits = t.value(featnet.logits(t, t.constant(x)));
  int right = 0;
  for (int i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < logits.cols(); ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    if (best == labels[static_cast<std::size_t>(i)]) ++right;
  }
  return static_cast<double>(right) / logits.rows();
}

}  // namespace gali
