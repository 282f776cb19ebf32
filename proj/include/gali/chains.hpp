#pragma once

#include <map>
#include <string>
#include <vector>

#include "gali/nets.hpp"
#include "gali/rng.hpp"
#include "gali/tape.hpp"

namespace gali {

/// Axis-aligned rectangle fully inside an S x S image; closed-open pixel
/// convention: column c is masked iff x0 <= c < x0 + w, row r iff
/// y0 <= r < y0 + h.
struct Mask {
  int x0 = 0;
  int y0 = 0;
  int w = 1;
  int h = 1;
};

/// w, h uniform on {1..S}, then x0 uniform on {0..S-w}, y0 on {0..S-h}.
/// Four uniform_int draws per mask, in that order.
Mask sample_mask(int side, Rng& rng);

bool mask_contains(const Mask& m, int row, int col);

/// Row-major selector over a [batch, side*side] image tensor; entry 1 where
/// the row's mask covers the pixel.
std::vector<std::uint8_t> mask_selector(const std::vector<Mask>& masks, int side);

// Plain-tensor variants (metrics, tests). Masked region is set to `fill`.
Tensor apply_mask(const Tensor& x, const std::vector<Mask>& masks, int side, double fill = -1.0);
/// recon inside the mask, x outside, exact pixelwise selection.
Tensor mix(const Tensor& x, const Tensor& recon, const std::vector<Mask>& masks, int side);

struct TupleBatch {
  int class_id = 0;
  std::vector<Var> slots;
  std::vector<SlotKind> kinds;
};

/// Symbolic description of one class's slot expressions, e.g.
/// "G(E(M3(G(z))))". Builders publish these both as documentation of the
/// class order and for the closure check below.
struct TupleRecipe {
  int class_id = 0;
  std::vector<std::string> slots;
  std::vector<SlotKind> kinds;
};

/// True iff the expression uses only x, z, iid eps/mask draws and
/// compositions of E, G, M, Mask_k, Mix — i.e. its distribution depends only
/// on data, prior and model parameters.
bool recipe_wellformed(const TupleRecipe& recipe);

enum class ChainKind { kAli2, kGali4, kGali8, kGaliMix, kGaliPt };

/// Number of [batch, d_z] encoder-noise tensors a builder draws per batch
/// (shared subexpressions are evaluated once). Mask draws are separate:
/// gali_mix additionally draws 4 masks per batch row.
int eps_draws_per_batch(ChainKind kind);
int mask_draws_per_row(ChainKind kind);

struct ChainSet {
  std::vector<TupleBatch> classes;
  std::map<std::string, Var> exprs;  // shared subexpression handles by name
};

/// Builders compose E and G on the given x/z leaves. `ge_trainable` selects
/// whether encoder/generator parameters enter the graph as trainable leaves
/// (GE update) or constants (discriminator update). Every application of E
/// draws one fresh eps tensor from rng.
ChainSet build_ali2(Tape& t, const ModelBundle& m, Var x, Var z, Rng& rng, bool ge_trainable);
ChainSet build_gali4(Tape& t, const ModelBundle& m, Var x, Var z, Rng& rng, bool ge_trainable);
ChainSet build_gali8(Tape& t, const ModelBundle& m, Var x, Var z, Rng& rng, bool ge_trainable);
ChainSet build_gali_mix(Tape& t, const ModelBundle& m, Var x, Var z, int side, Rng& rng,
                        bool ge_trainable);
/// `literal_class4` keeps the class-4 feature slot at M(G(z)) as printed in
/// the text; false switches it to M(G(E(G(z)))).
ChainSet build_gali_pt(Tape& t, const ModelBundle& m, const FeatureNet& featnet, Var x, Var z,
                       Rng& rng, bool ge_trainable, bool literal_class4 = true);

std::vector<TupleRecipe> recipes(ChainKind kind, bool pt_literal_class4 = true);

}  // namespace gali
