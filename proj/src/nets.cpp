#include "gali/nets.hpp"

#include <cmath>

namespace gali {

double NoiseSchedule::sigma(double t) const {
  if (sigma0 == 0.0) return 0.0;
  return sigma0 * std::exp(-t / tau);
}

DenseLayer make_dense(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                      bool sn_enabled) {
  // weights ~ N(0, 1/fan_in), biases 0
  Tensor w({out, in});
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = s * rng.normal();

  DenseLayer layer;
  layer.W = &store.add(name + ".W", std::move(w));
  layer.b = &store.add(name + ".b", Tensor({out}));
  layer.sn_enabled = sn_enabled;
  if (sn_enabled) {
    layer.sn_u = rng.normal_tensor({out});
    double norm = 0.0;
    for (std::size_t i = 0; i < layer.sn_u.size(); ++i) norm += layer.sn_u[i] * layer.sn_u[i];
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < layer.sn_u.size(); ++i) layer.sn_u[i] /= norm;
    spectral_normalize(layer, 1);
  }
  return layer;
}

Tensor spectral_normalize(DenseLayer& layer, int n_iters) {
  if (n_iters < 1) throw ModelConfigError("spectral_normalize: n_iters must be >= 1");
  const Tensor& w = layer.W->value;
  const int out = w.rows(), in = w.cols();
  if (layer.sn_u.size() != static_cast<std::size_t>(out)) layer.sn_u = Tensor::full({out}, 1.0);

  std::vector<double> u(layer.sn_u.data(), layer.sn_u.data() + out);
  std::vector<double> v(static_cast<std::size_t>(in));
  double sigma = 0.0;
  for (int it = 0; it < n_iters; ++it) {
    // v = normalize(W^T u)
    for (int j = 0; j < in; ++j) v[static_cast<std::size_t>(j)] = 0.0;
    for (int i = 0; i < out; ++i) {
      const double ui = u[static_cast<std::size_t>(i)];
      for (int j = 0; j < in; ++j) v[static_cast<std::size_t>(j)] += ui * w.at(i, j);
    }
    double vn = 0.0;
    for (double x : v) vn += x * x;
    vn = std::sqrt(std::max(vn, 1e-24));
    for (double& x : v) x /= vn;
    // u = normalize(W v)
    for (int i = 0; i < out; ++i) {
      double s = 0.0;
      for (int j = 0; j < in; ++j) s += w.at(i, j) * v[static_cast<std::size_t>(j)];
      u[static_cast<std::size_t>(i)] = s;
    }
    double un = 0.0;
    for (double x : u) un += x * x;
    un = std::sqrt(std::max(un, 1e-24));
    for (double& x : u) x /= un;
    // sigma = u^T W v
    sigma = 0.0;
    for (int i = 0; i < out; ++i) {
      double s = 0.0;
      for (int j = 0; j < in; ++j) s += w.at(i, j) * v[static_cast<std::size_t>(j)];
      sigma += u[static_cast<std::size_t>(i)] * s;
    }
  }
  sigma = std::max(sigma, 1e-12);
  for (int i = 0; i < out; ++i) layer.sn_u[static_cast<std::size_t>(i)] = u[static_cast<std::size_t>(i)];
  layer.sn_v = Tensor({in});
  for (int j = 0; j < in; ++j) layer.sn_v[static_cast<std::size_t>(j)] = v[static_cast<std::size_t>(j)];
  layer.sn_sigma = sigma;

  Tensor eff = w;
  for (std::size_t i = 0; i < eff.size(); ++i) eff[i] /= sigma;
  return eff;
}

Tensor spectral_normalize_certified(DenseLayer& layer) {
  Tensor eff = spectral_normalize(layer, 30);
  double prev = layer.sn_sigma;
  for (int it = 30; it < 5000; ++it) {
    eff = spectral_normalize(layer, 1);
    if (std::fabs(layer.sn_sigma - prev) <= 1e-7 * layer.sn_sigma) break;
    prev = layer.sn_sigma;
  }
  return eff;
}

Var DenseLayer::apply(Tape& t, Var x, bool trainable) const {
  Var w = trainable ? t.param(*W) : t.constant(W->value);
  if (sn_enabled) {
    if (sn_v.size() != static_cast<std::size_t>(W->value.cols()))
      throw ModelConfigError("spectral norm state not initialized; run spectral_normalize first");
    if (trainable) {
      // sigma_hat = u^T W v recomputed from the live weight node
      Tensor uv({W->value.rows(), W->value.cols()});
      for (int i = 0; i < uv.rows(); ++i)
        for (int j = 0; j < uv.cols(); ++j)
          uv.at(i, j) = sn_u[static_cast<std::size_t>(i)] * sn_v[static_cast<std::size_t>(j)];
      Var sigma = t.sum_all(t.mul(w, t.constant(std::move(uv))));
      w = t.scale_by(w, t.recip(sigma));
    } else {
      w = t.scale(w, 1.0 / sn_sigma);
    }
  }
  Var y = t.matmul_nt(x, w);
  Var bias = trainable ? t.param(*b) : t.constant(b->value);
  return t.add_row(y, bias);
}

namespace {

Var mlp_forward(Tape& t, const std::vector<DenseLayer>& layers, Var x, bool trainable) {
  Var h = x;
  for (const auto& layer : layers) h = t.leaky_relu(layer.apply(t, h, trainable), kLeakyReluAlpha);
  return h;
}

}  // namespace

EncoderNet::Encoding EncoderNet::encode_full(Tape& t, Var x, Var eps, bool trainable) const {
  Var h = mlp_forward(t, trunk, x, trainable);
  Var mu = head_mu.apply(t, h, trainable);
  Var logvar = t.clamp(head_logvar.apply(t, h, trainable), kLogvarLo, kLogvarHi);
  Var sigma = t.exp(t.scale(logvar, 0.5));
  Var z = t.add(mu, t.mul(sigma, eps));
  return {z, mu, logvar, h};
}

Var EncoderNet::encode(Tape& t, Var x, Var eps, bool trainable) const {
  return encode_full(t, x, eps, trainable).z;
}

Var GeneratorNet::generate(Tape& t, Var z, bool trainable) const {
  Var h = z;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i)
    h = t.leaky_relu(layers[i].apply(t, h, trainable), kLeakyReluAlpha);
  h = layers.back().apply(t, h, trainable);
  return final_tanh ? t.tanh(h) : h;
}

Var DiscriminatorNet::discriminate(Tape& t, const std::vector<Var>& slots,
                                   const std::vector<SlotKind>& kinds, double noise_sigma,
                                   const std::vector<Var>& eps_imgs, bool trainable) const {
  if (kinds != slot_kinds)
    throw ModelConfigError("discriminate: tuple slot kinds do not match discriminator config");
  if (slots.size() != slot_kinds.size())
    throw ModelConfigError("discriminate: slot count mismatch");

  std::vector<Var> feats;
  std::size_t img_idx = 0;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    Var in = slots[s];
    switch (slot_kinds[s]) {
      case SlotKind::kImage: {
        if (noise_sigma != 0.0) {
          if (img_idx >= eps_imgs.size())
            throw ModelConfigError("discriminate: missing image-slot noise");
          in = t.add(in, t.scale(eps_imgs[img_idx], noise_sigma));
        }
        ++img_idx;
        feats.push_back(mlp_forward(t, trunk_x, in, trainable));
        break;
      }
      case SlotKind::kLatent:
        feats.push_back(mlp_forward(t, trunk_z, in, trainable));
        break;
      case SlotKind::kFeature:
        feats.push_back(mlp_forward(t, trunk_m, in, trainable));
        break;
    }
  }
  Var h = feats.size() == 1 ? feats[0] : t.concat_cols(feats);
  for (std::size_t i = 0; i + 1 < head.size(); ++i)
    h = t.leaky_relu(head[i].apply(t, h, trainable), kLeakyReluAlpha);
  return head.back().apply(t, h, trainable);
}

Var FeatureNet::features(Tape& t, Var x) const {
  Var h = x;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i)
    h = t.leaky_relu(layers[i].apply(t, h, false), kLeakyReluAlpha);
  return h;
}

Var FeatureNet::logits(Tape& t, Var x, bool trainable) const {
  if (frozen && trainable) throw ModelConfigError("FeatureNet is frozen");
  Var h = x;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i)
    h = t.leaky_relu(layers[i].apply(t, h, trainable), kLeakyReluAlpha);
  return layers.back().apply(t, h, trainable);
}

int FeatureNet::feature_dim() const {
  return layers[layers.size() - 2].out_dim();
}

void ModelBundle::refresh_spectral_norm(int n_iters) {
  for (DenseLayer* layer : dis_layers())
    if (layer->sn_enabled) spectral_normalize(*layer, n_iters);
}

void ModelBundle::refresh_spectral_norm_certified() {
  for (DenseLayer* layer : dis_layers())
    if (layer->sn_enabled) spectral_normalize_certified(*layer);
}

std::vector<DenseLayer*> ModelBundle::dis_layers() {
  std::vector<DenseLayer*> out;
  for (auto& l : dis.trunk_x) out.push_back(&l);
  for (auto& l : dis.trunk_z) out.push_back(&l);
  for (auto& l : dis.trunk_m) out.push_back(&l);
  for (auto& l : dis.head) out.push_back(&l);
  return out;
}

ModelBundle make_model_bundle(const NetSizes& sizes, Rng& rng) {
  ModelBundle m;
  m.sizes = sizes;
  const int wt = sizes.width_trunk, wh = sizes.width_head;

  m.enc.trunk.push_back(make_dense(m.params, "enc.trunk.0", sizes.d_x, wt, rng, false));
  m.enc.trunk.push_back(make_dense(m.params, "enc.trunk.1", wt, wt, rng, false));
  m.enc.head_mu = make_dense(m.params, "enc.mu", wt, sizes.d_z, rng, false);
  m.enc.head_logvar = make_dense(m.params, "enc.logvar", wt, sizes.d_z, rng, false);

  m.gen.layers.push_back(make_dense(m.params, "gen.0", sizes.d_z, wt, rng, false));
  m.gen.layers.push_back(make_dense(m.params, "gen.1", wt, wt, rng, false));
  m.gen.layers.push_back(make_dense(m.params, "gen.2", wt, sizes.d_x, rng, false));

  const bool sn = sizes.sn_enabled;
  m.dis.slot_kinds = sizes.slots;
  m.dis.n_classes = sizes.n_classes;
  m.dis.trunk_x.push_back(make_dense(m.params, "dis.x.0", sizes.d_x, wt, rng, sn));
  m.dis.trunk_x.push_back(make_dense(m.params, "dis.x.1", wt, wt, rng, sn));
  m.dis.trunk_z.push_back(make_dense(m.params, "dis.z.0", sizes.d_z, wt, rng, sn));
  m.dis.trunk_z.push_back(make_dense(m.params, "dis.z.1", wt, wt, rng, sn));
  bool has_feature = false;
  for (SlotKind k : sizes.slots) has_feature |= (k == SlotKind::kFeature);
  if (has_feature) {
    if (sizes.feature_dim <= 0)
      throw ModelConfigError("feature slot requires a positive feature_dim");
    m.dis.trunk_m.push_back(make_dense(m.params, "dis.m.0", sizes.feature_dim, wt, rng, sn));
    m.dis.trunk_m.push_back(make_dense(m.params, "dis.m.1", wt, wt, rng, sn));
  }
  int head_in = 0;
  for (SlotKind k : sizes.slots) {
    (void)k;
    head_in += wt;  // every trunk ends at width_trunk
  }
  m.dis.head.push_back(make_dense(m.params, "dis.head.0", head_in, wh, rng, sn));
  m.dis.head.push_back(make_dense(m.params, "dis.head.1", wh, wh, rng, sn));
  m.dis.head.push_back(make_dense(m.params, "dis.head.2", wh, sizes.n_classes, rng, sn));
  return m;
}

FeatureNet make_feature_net(ParamStore& store, int d_x, int width, int n_classes, Rng& rng) {
  FeatureNet f;
  f.layers.push_back(make_dense(store, "featnet.0", d_x, width, rng, false));
  f.layers.push_back(make_dense(store, "featnet.1", width, width, rng, false));
  f.layers.push_back(make_dense(store, "featnet.2", width, n_classes, rng, false));
  return f;
}

}  // namespace gali
