#include "gali/chains.hpp"

#include <cctype>

namespace gali {

Mask sample_mask(int side, Rng& rng) {
  if (side < 1) throw ShapeError("sample_mask: side must be >= 1");
  Mask m;
  m.w = rng.uniform_int(1, side);
  m.h = rng.uniform_int(1, side);
  m.x0 = rng.uniform_int(0, side - m.w);
  m.y0 = rng.uniform_int(0, side - m.h);
  return m;
}

bool mask_contains(const Mask& m, int row, int col) {
  return col >= m.x0 && col < m.x0 + m.w && row >= m.y0 && row < m.y0 + m.h;
}

std::vector<std::uint8_t> mask_selector(const std::vector<Mask>& masks, int side) {
  std::vector<std::uint8_t> sel(masks.size() * static_cast<std::size_t>(side) * side, 0);
  for (std::size_t b = 0; b < masks.size(); ++b) {
    const Mask& m = masks[b];
    for (int r = m.y0; r < m.y0 + m.h; ++r)
      for (int c = m.x0; c < m.x0 + m.w; ++c)
        sel[(b * side + static_cast<std::size_t>(r)) * side + c] = 1;
  }
  return sel;
}

Tensor apply_mask(const Tensor& x, const std::vector<Mask>& masks, int side, double fill) {
  if (x.rows() != static_cast<int>(masks.size()))
    throw ShapeError("apply_mask: one mask per batch row required");
  if (x.cols() != side * side) throw ShapeError("apply_mask: image width != side*side");
  Tensor out = x;
  const auto sel = mask_selector(masks, side);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (sel[i]) out[i] = fill;
  return out;
}

Tensor mix(const Tensor& x, const Tensor& recon, const std::vector<Mask>& masks, int side) {
  require_same_shape(x, recon, "mix");
  if (x.rows() != static_cast<int>(masks.size()))
    throw ShapeError("mix: one mask per batch row required");
  Tensor out = x;
  const auto sel = mask_selector(masks, side);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (sel[i]) out[i] = recon[i];
  return out;
}

namespace {

constexpr auto kImg = SlotKind::kImage;
constexpr auto kLat = SlotKind::kLatent;
constexpr auto kFeat = SlotKind::kFeature;

Var fresh_encode(Tape& t, const ModelBundle& m, Var x, Rng& rng, bool trainable) {
  const int batch = t.value(x).rows();
  Var eps = t.constant(rng.normal_tensor({batch, m.sizes.d_z}));
  return m.enc.encode(t, x, eps, trainable);
}

std::vector<Mask> fresh_masks(int batch, int side, Rng& rng) {
  std::vector<Mask> masks;
  masks.reserve(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) masks.push_back(sample_mask(side, rng));
  return masks;
}

}  // namespace

ChainSet build_ali2(Tape& t, const ModelBundle& m, Var x, Var z, Rng& rng, bool ge_trainable) {
  ChainSet cs;
  Var e_x = fresh_encode(t, m, x, rng, ge_trainable);
  Var g_z = m.gen.generate(t, z, ge_trainable);
  cs.exprs = {{"E(x)", e_x}, {"G(z)", g_z}};
  cs.classes = {
      {0, {x, e_x}, {kImg, kLat}},
      {1, {g_z, z}, {kImg, kLat}},
  };
  return cs;
}

ChainSet build_gali4(Tape& t, const ModelBundle& m, Var x, Var z, Rng& rng, bool ge_trainable) {
  ChainSet cs;
  Var e_x = fresh_encode(t, m, x, rng, ge_trainable);
  Var g_e_x = m.gen.generate(t, e_x, ge_trainable);
  Var e_g_e_x = fresh_encode(t, m, g_e_x, rng, ge_trainable);
  Var g_z = m.gen.generate(t, z, ge_trainable);
  Var e_g_z = fresh_encode(t, m, g_z, rng, ge_trainable);
  Var g_e_g_z = m.gen.generate(t, e_g_z, ge_trainable);
  cs.exprs = {{"E(x)", e_x},     {"G(E(x))", g_e_x},     {"E(G(E(x)))", e_g_e_x},
              {"G(z)", g_z},     {"E(G(z))", e_g_z},     {"G(E(G(z)))", g_e_g_z}};
  cs.classes = {
      {0, {x, e_x}, {kImg, kLat}},
      {1, {g_z, z}, {kImg, kLat}},
      {2, {x, e_g_e_x}, {kImg, kLat}},
      {3, {g_e_g_z, z}, {kImg, kLat}},
  };
  return cs;
}

ChainSet build_gali8(Tape& t, const ModelBundle& m, Var x, Var z, Rng& rng, bool ge_trainable) {
  ChainSet cs;
  // chain A: (x, E(x), G(E(x)), E(G(E(x))))
  Var e_x = fresh_encode(t, m, x, rng, ge_trainable);
  Var g_e_x = m.gen.generate(t, e_x, ge_trainable);
  Var e_g_e_x = fresh_encode(t, m, g_e_x, rng, ge_trainable);
  // chain B: (G(z), z, G(E(G(z))), E(G(z)))
  Var g_z = m.gen.generate(t, z, ge_trainable);
  Var e_g_z = fresh_encode(t, m, g_z, rng, ge_trainable);
  Var g_e_g_z = m.gen.generate(t, e_g_z, ge_trainable);
  cs.exprs = {{"E(x)", e_x},     {"G(E(x))", g_e_x},     {"E(G(E(x)))", e_g_e_x},
              {"G(z)", g_z},     {"E(G(z))", e_g_z},     {"G(E(G(z)))", g_e_g_z}};

  const std::vector<SlotKind> kinds = {kImg, kLat, kImg, kLat};
  // permutations: identity, swap image slots, swap latent slots, swap both
  auto emit = [&](int id, Var i1, Var l1, Var i2, Var l2) {
    cs.classes.push_back({id, {i1, l1, i2, l2}, kinds});
  };
  emit(0, x, e_x, g_e_x, e_g_e_x);
  emit(1, g_e_x, e_x, x, e_g_e_x);
  emit(2, x, e_g_e_x, g_e_x, e_x);
  emit(3, g_e_x, e_g_e_x, x, e_x);
  emit(4, g_z, z, g_e_g_z, e_g_z);
  emit(5, g_e_g_z, z, g_z, e_g_z);
  emit(6, g_z, e_g_z, g_e_g_z, z);
  emit(7, g_e_g_z, e_g_z, g_z, z);
  return cs;
}

ChainSet build_gali_mix(Tape& t, const ModelBundle& m, Var x, Var z, int side, Rng& rng,
                        bool ge_trainable) {
  ChainSet cs;
  const int batch = t.value(x).rows();

  const auto m1 = fresh_masks(batch, side, rng);
  const auto m2 = fresh_masks(batch, side, rng);
  const auto m3 = fresh_masks(batch, side, rng);
  const auto m4 = fresh_masks(batch, side, rng);

  Var m1_x = t.select_fill(x, mask_selector(m1, side), -1.0);
  Var e_m1_x = fresh_encode(t, m, m1_x, rng, ge_trainable);
  Var recon = m.gen.generate(t, e_m1_x, ge_trainable);  // G(E(M1(x)))
  Var m2_recon = t.select_fill(recon, mask_selector(m2, side), -1.0);
  Var e_m2_recon = fresh_encode(t, m, m2_recon, rng, ge_trainable);
  Var g_z = m.gen.generate(t, z, ge_trainable);
  Var m3_g_z = t.select_fill(g_z, mask_selector(m3, side), -1.0);
  Var e_m3_g_z = fresh_encode(t, m, m3_g_z, rng, ge_trainable);
  Var g_e_m3_g_z = m.gen.generate(t, e_m3_g_z, ge_trainable);
  Var mixed = t.select_mix(x, recon, mask_selector(m1, side));  // Mix(x, M1)
  Var m4_mixed = t.select_fill(mixed, mask_selector(m4, side), -1.0);
  Var e_m4_mixed = fresh_encode(t, m, m4_mixed, rng, ge_trainable);

  cs.exprs = {{"M1(x)", m1_x},
              {"E(M1(x))", e_m1_x},
              {"G(E(M1(x)))", recon},
              {"E(M2(G(E(M1(x)))))", e_m2_recon},
              {"G(z)", g_z},
              {"G(E(M3(G(z))))", g_e_m3_g_z},
              {"Mix(x,M1)", mixed},
              {"E(M4(Mix(x,M1)))", e_m4_mixed}};
  cs.classes = {
      {0, {x, e_m1_x}, {kImg, kLat}},
      {1, {g_z, z}, {kImg, kLat}},
      {2, {x, e_m2_recon}, {kImg, kLat}},
      {3, {g_e_m3_g_z, z}, {kImg, kLat}},
      {4, {mixed, e_m1_x}, {kImg, kLat}},
      {5, {mixed, e_m2_recon}, {kImg, kLat}},
      {6, {x, e_m4_mixed}, {kImg, kLat}},
      {7, {recon, e_m4_mixed}, {kImg, kLat}},
  };
  return cs;
}

ChainSet build_gali_pt(Tape& t, const ModelBundle& m, const FeatureNet& featnet, Var x, Var z,
                       Rng& rng, bool ge_trainable, bool literal_class4) {
  if (featnet.layers.empty())
    throw ModelConfigError("build_gali_pt: feature network required");
  ChainSet cs;
  Var e_x = fresh_encode(t, m, x, rng, ge_trainable);
  Var g_e_x = m.gen.generate(t, e_x, ge_trainable);
  Var e_g_e_x = fresh_encode(t, m, g_e_x, rng, ge_trainable);
  Var g_z = m.gen.generate(t, z, ge_trainable);
  Var e_g_z = fresh_encode(t, m, g_z, rng, ge_trainable);
  Var g_e_g_z = m.gen.generate(t, e_g_z, ge_trainable);

  Var f_x = featnet.features(t, x);
  Var f_g_z = featnet.features(t, g_z);
  Var f_g_e_x = featnet.features(t, g_e_x);
  Var f_4 = literal_class4 ? f_g_z : featnet.features(t, g_e_g_z);

  cs.exprs = {{"E(x)", e_x},   {"G(E(x))", g_e_x}, {"E(G(E(x)))", e_g_e_x},
              {"G(z)", g_z},   {"G(E(G(z)))", g_e_g_z},
              {"M(x)", f_x},   {"M(G(z))", f_g_z}, {"M(G(E(x)))", f_g_e_x}};
  const std::vector<SlotKind> kinds = {kImg, kLat, kFeat};
  cs.classes = {
      {0, {x, e_x, f_x}, kinds},
      {1, {g_z, z, f_g_z}, kinds},
      {2, {x, e_g_e_x, f_g_e_x}, kinds},
      {3, {g_e_g_z, z, f_4}, kinds},
  };
  return cs;
}

int eps_draws_per_batch(ChainKind kind) {
  switch (kind) {
    case ChainKind::kAli2:
      return 1;
    case ChainKind::kGali4:
    case ChainKind::kGali8:
    case ChainKind::kGaliPt:
      return 3;
    case ChainKind::kGaliMix:
      return 4;
  }
  return 0;
}

int mask_draws_per_row(ChainKind kind) {
  return kind == ChainKind::kGaliMix ? 4 : 0;
}

std::vector<TupleRecipe> recipes(ChainKind kind, bool pt_literal_class4) {
  const std::vector<SlotKind> il = {kImg, kLat};
  const std::vector<SlotKind> ilil = {kImg, kLat, kImg, kLat};
  const std::vector<SlotKind> ilf = {kImg, kLat, kFeat};
  switch (kind) {
    case ChainKind::kAli2:
      return {{0, {"x", "E(x)"}, il}, {1, {"G(z)", "z"}, il}};
    case ChainKind::kGali4:
      return {{0, {"x", "E(x)"}, il},
              {1, {"G(z)", "z"}, il},
              {2, {"x", "E(G(E(x)))"}, il},
              {3, {"G(E(G(z)))", "z"}, il}};
    case ChainKind::kGali8:
      return {{0, {"x", "E(x)", "G(E(x))", "E(G(E(x)))"}, ilil},
              {1, {"G(E(x))", "E(x)", "x", "E(G(E(x)))"}, ilil},
              {2, {"x", "E(G(E(x)))", "G(E(x))", "E(x)"}, ilil},
              {3, {"G(E(x))", "E(G(E(x)))", "x", "E(x)"}, ilil},
              {4, {"G(z)", "z", "G(E(G(z)))", "E(G(z))"}, ilil},
              {5, {"G(E(G(z)))", "z", "G(z)", "E(G(z))"}, ilil},
              {6, {"G(z)", "E(G(z))", "G(E(G(z)))", "z"}, ilil},
              {7, {"G(E(G(z)))", "E(G(z))", "G(z)", "z"}, ilil}};
    case ChainKind::kGaliMix:
      return {{0, {"x", "E(M1(x))"}, il},
              {1, {"G(z)", "z"}, il},
              {2, {"x", "E(M2(G(E(M1(x)))))"}, il},
              {3, {"G(E(M3(G(z))))", "z"}, il},
              {4, {"Mix(x,M1)", "E(M1(x))"}, il},
              {5, {"Mix(x,M1)", "E(M2(G(E(M1(x)))))"}, il},
              {6, {"x", "E(M4(Mix(x,M1)))"}, il},
              {7, {"G(E(M1(x)))", "E(M4(Mix(x,M1)))"}, il}};
    case ChainKind::kGaliPt:
      return {{0, {"x", "E(x)", "M(x)"}, ilf},
              {1, {"G(z)", "z", "M(G(z))"}, ilf},
              {2, {"x", "E(G(E(x)))", "M(G(E(x)))"}, ilf},
              {3, {"G(E(G(z)))", "z", pt_literal_class4 ? "M(G(z))" : "M(G(E(G(z))))"}, ilf}};
  }
  return {};
}

bool recipe_wellformed(const TupleRecipe& recipe) {
  // Tokens allowed: atoms x, z; operators E(.), G(.), M(.), M1..M9(.) (mask
  // application), Mix(.,.). Anything else would smuggle in an external data
  // source and break the optimality analysis.
  for (const std::string& expr : recipe.slots) {
    std::size_t i = 0;
    int depth = 0;
    bool ok = true;
    auto expect_atom_or_call = [&](auto&& self) -> bool {
      if (i >= expr.size()) return false;
      if (expr[i] == 'x' || expr[i] == 'z') {
        ++i;
        return true;
      }
      // operator name
      std::string name;
      while (i < expr.size() && (std::isalnum(static_cast<unsigned char>(expr[i])))) {
        name += expr[i];
        ++i;
      }
      const bool mask_op = name.size() >= 2 && name[0] == 'M' &&
                           std::isdigit(static_cast<unsigned char>(name[1]));
      if (name != "E" && name != "G" && name != "M" && name != "Mix" && !mask_op) return false;
      if (i >= expr.size() || expr[i] != '(') return false;
      ++i;
      ++depth;
      if (!self(self)) return false;
      if (name == "Mix") {
        if (i >= expr.size() || expr[i] != ',') return false;
        ++i;
        // second argument of Mix is a mask name
        std::string marg;
        while (i < expr.size() && std::isalnum(static_cast<unsigned char>(expr[i]))) {
          marg += expr[i];
          ++i;
        }
        if (marg.empty() || marg[0] != 'M') return false;
      }
      if (i >= expr.size() || expr[i] != ')') return false;
      ++i;
      --depth;
      return true;
    };
    ok = expect_atom_or_call(expect_atom_or_call) && i == expr.size() && depth == 0;
    if (!ok) return false;
  }
  return true;
}

}  // namespace gali
