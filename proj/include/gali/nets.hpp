#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gali/rng.hpp"
#include "gali/tape.hpp"
#include "gali/tensor.hpp"

namespace gali {

struct ModelConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// sigma(t) = sigma0 * exp(-t / tau); the decaying magnitude of the Gaussian
/// noise added to every image fed to the discriminator.
struct NoiseSchedule {
  double sigma0 = 0.3;
  double tau = 1.0;
  double sigma(double t) const;
};

/// Fully connected layer, weights stored [out, in]. When sn_enabled, forward
/// passes use W / sigma_hat where sigma_hat = u^T W v with u, v frozen at the
/// latest power-iteration state (refresh with spectral_normalize before
/// building a step's graph). In trainable graphs sigma_hat is recomputed from
/// the live W node, so gradients flow through the normalization and the
/// radial component of the weight gradient cancels.
struct DenseLayer {
  Parameter* W = nullptr;
  Parameter* b = nullptr;
  Tensor sn_u;  // unit-norm power iteration state, length = out
  Tensor sn_v;  // matching right vector, length = in
  bool sn_enabled = false;
  double sn_sigma = 1.0;

  int in_dim() const { return W->value.cols(); }
  int out_dim() const { return W->value.rows(); }

  Var apply(Tape& t, Var x, bool trainable) const;
};

DenseLayer make_dense(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                      bool sn_enabled);

/// Runs `n_iters` power iterations, updates layer.sn_u and layer.sn_sigma,
/// and returns the effective weight W / sigma_hat. A zero matrix clamps
/// sigma_hat to 1e-12.
Tensor spectral_normalize(DenseLayer& layer, int n_iters);

/// Verification-grade estimate: at least 30 power iterations, then keeps
/// iterating until successive sigma estimates agree to 1e-7 relative
/// (capped at 5000). Exactly 30 iterations can miss 1e-3 accuracy on a
/// sizable fraction of random matrices when the top singular values cluster.
Tensor spectral_normalize_certified(DenseLayer& layer);

constexpr double kLeakyReluAlpha = 0.02;
constexpr double kLogvarLo = -60.0;
constexpr double kLogvarHi = 10.0;

struct EncoderNet {
  std::vector<DenseLayer> trunk;
  DenseLayer head_mu;
  DenseLayer head_logvar;

  struct Encoding {
    Var z;
    Var mu;
    Var logvar;
    Var hidden;  // last trunk activation (probe features)
  };

  /// z = mu(x) + exp(0.5 * clamp(logvar(x))) ⊙ eps. eps is supplied by the
  /// caller so encodings stay deterministic under a fixed draw sequence.
  Encoding encode_full(Tape& t, Var x, Var eps, bool trainable) const;
  Var encode(Tape& t, Var x, Var eps, bool trainable) const;
};

struct GeneratorNet {
  std::vector<DenseLayer> layers;
  bool final_tanh = true;

  Var generate(Tape& t, Var z, bool trainable) const;
};

enum class SlotKind { kImage, kLatent, kFeature };

/// Multi-class discriminator over tuples: shared image trunk, shared latent
/// trunk, optional feature trunk, and a joint head over the concatenated slot
/// features. Image slots are perturbed with noise_sigma * eps before the
/// trunk.
struct DiscriminatorNet {
  std::vector<DenseLayer> trunk_x;
  std::vector<DenseLayer> trunk_z;
  std::vector<DenseLayer> trunk_m;  // empty unless a feature slot exists
  std::vector<DenseLayer> head;
  std::vector<SlotKind> slot_kinds;
  int n_classes = 0;

  Var discriminate(Tape& t, const std::vector<Var>& slots,
                   const std::vector<SlotKind>& kinds, double noise_sigma,
                   const std::vector<Var>& eps_imgs, bool trainable) const;
};

/// Frozen feature extractor. Gradients never flow into it: every forward pass
/// uses constant leaves.
struct FeatureNet {
  std::vector<DenseLayer> layers;
  bool frozen = true;

  Var features(Tape& t, Var x) const;  // penultimate activations
  Var logits(Tape& t, Var x, bool trainable = false) const;
  int feature_dim() const;
};

struct NetSizes {
  int d_x = 2;
  int d_z = 2;
  int width_trunk = 128;
  int width_head = 256;
  int n_classes = 2;
  std::vector<SlotKind> slots = {SlotKind::kImage, SlotKind::kLatent};
  int feature_dim = 0;  // input width of trunk_m when a feature slot exists
  bool sn_enabled = true;
};

/// Encoder + generator + discriminator sharing one ParamStore.
struct ModelBundle {
  ParamStore params;
  EncoderNet enc;
  GeneratorNet gen;
  DiscriminatorNet dis;
  NetSizes sizes;

  ModelBundle() = default;
  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;
  ModelBundle(ModelBundle&&) = default;
  ModelBundle& operator=(ModelBundle&&) = default;

  /// Runs one power iteration on every sn-enabled discriminator layer,
  /// refreshing the cached sigma estimates for the coming step.
  void refresh_spectral_norm(int n_iters = 1);
  /// Converged estimates (>= 30 iterations each), for freshly loaded weights.
  void refresh_spectral_norm_certified();
  std::vector<DenseLayer*> dis_layers();
};

ModelBundle make_model_bundle(const NetSizes& sizes, Rng& rng);

FeatureNet make_feature_net(ParamStore& store, int d_x, int width, int n_classes, Rng& rng);

}  // namespace gali
