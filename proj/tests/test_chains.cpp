#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gali/chains.hpp"
#include "gali/datasets.hpp"
#include "gali/objectives.hpp"
#include "testutil.hpp"

using namespace gali;

namespace {

// E and G as exact linear inverses on d_x = d_z = 2: the encoder mean is
// A x (deterministic via logvar -50), the generator undoes it with A^{-1}.
// leaky_relu is threaded through the [t, -t] split so the maps are exact.
ModelBundle identity_pair(double a11, double a22) {
  ModelBundle m;
  m.sizes.d_x = 2;
  m.sizes.d_z = 2;
  const double k = 1.0 + kLeakyReluAlpha;

  auto dense = [&](const std::string& name, Tensor w, Tensor b) {
    DenseLayer l;
    l.W = &m.params.add(name + ".W", std::move(w));
    l.b = &m.params.add(name + ".b", std::move(b));
    return l;
  };

  // trunk: h = lrelu([x; -x]) in R^4, head combines (h_i - h_{2+i}) / (1+a)
  Tensor split({4, 2}, {1, 0, 0, 1, -1, 0, 0, -1});
  m.enc.trunk.push_back(dense("enc.trunk.0", split, Tensor({4})));
  Tensor mu_w({2, 4}, {a11 / k, 0, -a11 / k, 0, 0, a22 / k, 0, -a22 / k});
  m.enc.head_mu = dense("enc.mu", mu_w, Tensor({2}));
  m.enc.head_logvar = dense("enc.logvar", Tensor({2, 4}), Tensor({2}, {-50.0, -50.0}));

  // generator: same split trick with A^{-1}, no output tanh
  m.gen.final_tanh = false;
  m.gen.layers.push_back(dense("gen.0", split, Tensor({4})));
  Tensor inv_w({2, 4}, {1.0 / (a11 * k), 0, -1.0 / (a11 * k), 0, 0, 1.0 / (a22 * k), 0, -1.0 / (a22 * k)});
  m.gen.layers.push_back(dense("gen.1", inv_w, Tensor({2})));
  return m;
}

}  // namespace

TEST_CASE("sample_mask ranges and degenerate cases") {
  Rng rng(1);
  CHECK_THROWS_AS(sample_mask(0, rng), ShapeError);

  // S = 1: the only legal mask
  for (int i = 0; i < 20; ++i) {
    const Mask m = sample_mask(1, rng);
    CHECK(m.x0 == 0);
    CHECK(m.y0 == 0);
    CHECK(m.w == 1);
    CHECK(m.h == 1);
  }

  // always fully inside; full-size masks can only sit at the origin
  bool saw_full = false;
  for (int i = 0; i < 5000; ++i) {
    const Mask m = sample_mask(8, rng);
    CHECK(m.w >= 1);
    CHECK(m.h >= 1);
    CHECK(m.x0 >= 0);
    CHECK(m.y0 >= 0);
    CHECK(m.x0 + m.w <= 8);
    CHECK(m.y0 + m.h <= 8);
    if (m.w == 8 && m.h == 8) {
      saw_full = true;
      CHECK(m.x0 == 0);
      CHECK(m.y0 == 0);
    }
  }
  CHECK(saw_full);
}

TEST_CASE("mask width marginal is uniform (chi-square)") {
  Rng rng(77);
  std::vector<long> counts(8, 0);
  for (int i = 0; i < 100000; ++i) ++counts[static_cast<std::size_t>(sample_mask(8, rng).w - 1)];
  CHECK(testutil::chi2_uniform_pvalue(counts) > 0.001);
}

TEST_CASE("apply_mask exactness") {
  Rng rng(3);
  const Tensor x = rng.uniform_tensor({2, 64}, -0.9, 0.9);

  const std::vector<Mask> full(2, Mask{0, 0, 8, 8});
  const Tensor blank = apply_mask(x, full, 8);
  for (std::size_t i = 0; i < blank.size(); ++i) CHECK(blank[i] == -1.0);

  const std::vector<Mask> one(2, Mask{0, 0, 1, 1});
  const Tensor dot = apply_mask(x, one, 8);
  for (int b = 0; b < 2; ++b) {
    int changed = 0;
    for (int j = 0; j < 64; ++j) changed += dot.at(b, j) != x.at(b, j);
    CHECK(changed == 1);
    CHECK(dot.at(b, 0) == -1.0);
  }

  // idempotent
  std::vector<Mask> masks = {sample_mask(8, rng), sample_mask(8, rng)};
  CHECK(apply_mask(apply_mask(x, masks, 8), masks, 8) == apply_mask(x, masks, 8));
}

TEST_CASE("mask boundary follows the closed-open convention") {
  const Mask m{2, 3, 4, 2};  // cols [2,6), rows [3,5)
  CHECK(mask_contains(m, 3, 2));
  CHECK(mask_contains(m, 4, 5));
  CHECK(!mask_contains(m, 3, 6));
  CHECK(!mask_contains(m, 5, 2));
  CHECK(!mask_contains(m, 2, 2));
  const std::vector<Mask> ms = {m};
  const Tensor x = Tensor::full({1, 64}, 0.5);
  const Tensor masked = apply_mask(x, ms, 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c)
      CHECK(masked.at(0, r * 8 + c) == (mask_contains(m, r, c) ? -1.0 : 0.5));
}

TEST_CASE("mix exactness") {
  Rng rng(5);
  const Tensor x = rng.uniform_tensor({3, 64}, -1.0, 1.0);
  const Tensor r = rng.uniform_tensor({3, 64}, -1.0, 1.0);
  std::vector<Mask> masks;
  for (int i = 0; i < 3; ++i) masks.push_back(sample_mask(8, rng));

  CHECK(mix(x, x, masks, 8) == x);
  const std::vector<Mask> full(3, Mask{0, 0, 8, 8});
  CHECK(mix(x, r, full, 8) == r);

  // partition identity: mix(x,r,M) + mix(r,x,M) = x + r pixelwise
  const Tensor m1 = mix(x, r, masks, 8);
  const Tensor m2 = mix(r, x, masks, 8);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(m1[i] + m2[i] == x[i] + r[i]);
}

TEST_CASE("gali4 class structure") {
  Rng rng(8);
  NetSizes sizes;
  sizes.d_x = 4;
  sizes.d_z = 2;
  sizes.width_trunk = 6;
  sizes.width_head = 8;
  sizes.n_classes = 4;
  ModelBundle m = make_model_bundle(sizes, rng);
  const Tensor x = rng.uniform_tensor({5, 4}, -0.9, 0.9);
  const Tensor z = rng.normal_tensor({5, 2});

  Rng chain_rng(100);
  Tape t;
  ChainSet cs = build_gali4(t, m, t.constant(x), t.constant(z), chain_rng, false);
  REQUIRE(cs.classes.size() == 4);

  // class 2 image is generate(z), bit-exact
  Tape t2;
  CHECK(t.value(cs.classes[1].slots[0]) == t2.value(m.gen.generate(t2, t2.constant(z), false)));

  // class 1 and 3 share the image slot; latents come from the shared chain
  CHECK(cs.classes[0].slots[0].id == cs.classes[2].slots[0].id);
  CHECK(cs.classes[0].slots[1].id == cs.exprs.at("E(x)").id);
  CHECK(cs.classes[2].slots[1].id == cs.exprs.at("E(G(E(x)))").id);
}

TEST_CASE("gali4 deterministic-encoder limit composes externally") {
  ModelBundle m = identity_pair(1.0, 1.0);
  Rng data(3);
  const Tensor x = data.uniform_tensor({4, 2}, -0.9, 0.9);
  const Tensor z = data.normal_tensor({4, 2});

  Rng chain_rng(50);
  Tape t;
  ChainSet cs = build_gali4(t, m, t.constant(x), t.constant(z), chain_rng, false);

  // replay the same draw sequence externally: E, then G, then E
  Rng replay(50);
  Tape t2;
  Var xv = t2.constant(x);
  Var e_x = m.enc.encode(t2, xv, t2.constant(replay.normal_tensor({4, 2})), false);
  Var g_e_x = m.gen.generate(t2, e_x, false);
  Var e_g_e_x = m.enc.encode(t2, g_e_x, t2.constant(replay.normal_tensor({4, 2})), false);
  CHECK(t.value(cs.classes[2].slots[1]) == t2.value(e_g_e_x));
}

TEST_CASE("identity pair makes classes 1 and 3 coincide") {
  ModelBundle m = identity_pair(0.7, 1.3);
  Rng data(4);
  const Tensor x = data.uniform_tensor({6, 2}, -0.9, 0.9);
  const Tensor z = data.normal_tensor({6, 2});

  // G(E(x)) = x up to the sigma = e^-25 encoder noise floor
  Rng r1(9);
  Tape t;
  ChainSet cs = build_gali4(t, m, t.constant(x), t.constant(z), r1, false);
  const Tensor recon = t.value(cs.exprs.at("G(E(x))"));
  for (std::size_t i = 0; i < recon.size(); ++i) CHECK(std::fabs(recon[i] - x[i]) < 1e-9);

  // with sigma ~ 0 both classes carry (x, A x): identical joint samples
  const Tensor lat1 = t.value(cs.classes[0].slots[1]);
  const Tensor lat3 = t.value(cs.classes[2].slots[1]);
  for (std::size_t i = 0; i < lat1.size(); ++i) CHECK(std::fabs(lat3[i] - lat1[i]) < 1e-9);
  CHECK(t.value(cs.classes[0].slots[0]) == t.value(cs.classes[2].slots[0]));
}

TEST_CASE("gali8 structure and permutation group") {
  Rng rng(11);
  NetSizes sizes;
  sizes.d_x = 4;
  sizes.d_z = 2;
  sizes.width_trunk = 6;
  sizes.width_head = 8;
  sizes.n_classes = 8;
  sizes.slots = {SlotKind::kImage, SlotKind::kLatent, SlotKind::kImage, SlotKind::kLatent};
  ModelBundle m = make_model_bundle(sizes, rng);
  const Tensor x = rng.uniform_tensor({3, 4}, -0.9, 0.9);
  const Tensor z = rng.normal_tensor({3, 2});

  Rng chain_rng(7);
  Tape t;
  Var xv = t.constant(x);
  ChainSet cs = build_gali8(t, m, xv, t.constant(z), chain_rng, false);
  REQUIRE(cs.classes.size() == 8);
  for (const auto& tb : cs.classes)
    CHECK(tb.kinds == std::vector<SlotKind>{SlotKind::kImage, SlotKind::kLatent, SlotKind::kImage,
                                            SlotKind::kLatent});

  // identity permutation of chain A starts with the gali4 class-1 pair
  CHECK(cs.classes[0].slots[0].id == xv.id);
  CHECK(cs.classes[0].slots[1].id == cs.exprs.at("E(x)").id);

  // swap-both applied twice is the identity on the recipe level
  const auto rec = recipes(ChainKind::kGali8);
  auto swap_both = [](std::vector<std::string> s) {
    std::swap(s[0], s[2]);
    std::swap(s[1], s[3]);
    return s;
  };
  CHECK(swap_both(swap_both(rec[0].slots)) == rec[0].slots);
  CHECK(swap_both(rec[0].slots) == rec[3].slots);
  CHECK(swap_both(rec[4].slots) == rec[7].slots);
}

TEST_CASE("recipes satisfy the distribution-dependence closure") {
  for (ChainKind kind : {ChainKind::kAli2, ChainKind::kGali4, ChainKind::kGali8,
                         ChainKind::kGaliMix, ChainKind::kGaliPt}) {
    const auto rec = recipes(kind);
    CHECK(!rec.empty());
    for (const auto& r : rec) CHECK(recipe_wellformed(r));
  }
  CHECK(!recipe_wellformed({0, {"x + noise"}, {SlotKind::kImage}}));
  CHECK(!recipe_wellformed({0, {"F(x)"}, {SlotKind::kImage}}));
  CHECK(!recipe_wellformed({0, {"E(x"}, {SlotKind::kLatent}}));
}

TEST_CASE("builders emit the documented class counts and draw budget") {
  Rng rng(13);
  NetSizes sizes;
  sizes.d_x = 64;
  sizes.d_z = 3;
  sizes.width_trunk = 6;
  sizes.width_head = 8;
  sizes.n_classes = 8;
  ModelBundle m = make_model_bundle(sizes, rng);
  const int batch = 4;
  const Tensor x = Bars8{}.sample(rng, batch).images;
  const Tensor z = rng.normal_tensor({batch, 3});

  struct Case {
    ChainKind kind;
    std::size_t classes;
  };
  for (const Case c : {Case{ChainKind::kAli2, 2}, Case{ChainKind::kGali4, 4},
                       Case{ChainKind::kGali8, 8}, Case{ChainKind::kGaliMix, 8}}) {
    Rng chain_rng(1000 + static_cast<std::uint64_t>(c.classes));
    const std::uint64_t normals0 = chain_rng.normal_draws();
    const std::uint64_t ints0 = chain_rng.int_draws();
    Tape t;
    Var xv = t.constant(x), zv = t.constant(z);
    ChainSet cs;
    switch (c.kind) {
      case ChainKind::kAli2:
        cs = build_ali2(t, m, xv, zv, chain_rng, false);
        break;
      case ChainKind::kGali4:
        cs = build_gali4(t, m, xv, zv, chain_rng, false);
        break;
      case ChainKind::kGali8:
        cs = build_gali8(t, m, xv, zv, chain_rng, false);
        break;
      default:
        cs = build_gali_mix(t, m, xv, zv, 8, chain_rng, false);
        break;
    }
    CHECK(cs.classes.size() == c.classes);
    for (const auto& tb : cs.classes) {
      for (std::size_t s = 0; s < tb.slots.size(); ++s)
        CHECK(t.value(tb.slots[s]).rows() == batch);
    }
    const std::uint64_t normal_used = chain_rng.normal_draws() - normals0;
    CHECK(normal_used ==
          static_cast<std::uint64_t>(eps_draws_per_batch(c.kind)) * batch * 3);
    const std::uint64_t ints_used = chain_rng.int_draws() - ints0;
    CHECK(ints_used == static_cast<std::uint64_t>(mask_draws_per_row(c.kind)) * batch * 4);
  }
}

TEST_CASE("gali_mix shares subexpressions across classes") {
  Rng rng(17);
  NetSizes sizes;
  sizes.d_x = 64;
  sizes.d_z = 2;
  sizes.width_trunk = 6;
  sizes.width_head = 8;
  sizes.n_classes = 8;
  ModelBundle m = make_model_bundle(sizes, rng);
  const Tensor x = Bars8{}.sample(rng, 3).images;
  const Tensor z = rng.normal_tensor({3, 2});

  Rng chain_rng(19);
  Tape t;
  ChainSet cs = build_gali_mix(t, m, t.constant(x), t.constant(z), 8, chain_rng, false);

  // recipe inspection: class 2 is mask-free
  CHECK(recipes(ChainKind::kGaliMix)[1].slots == std::vector<std::string>{"G(z)", "z"});

  // classes 5 and 6 share the mixed image; 1 and 5 share E(M1(x))
  CHECK(cs.classes[4].slots[0].id == cs.classes[5].slots[0].id);
  CHECK(cs.classes[4].slots[0].id == cs.exprs.at("Mix(x,M1)").id);
  CHECK(cs.classes[0].slots[1].id == cs.classes[4].slots[1].id);
  CHECK(cs.classes[6].slots[1].id == cs.classes[7].slots[1].id);

  // mixed image agrees with x or the reconstruction pixelwise, never else
  const Tensor mixed = t.value(cs.exprs.at("Mix(x,M1)"));
  const Tensor recon = t.value(cs.exprs.at("G(E(M1(x)))"));
  for (std::size_t i = 0; i < mixed.size(); ++i)
    CHECK((mixed[i] == x[i] || mixed[i] == recon[i]));
}

TEST_CASE("gali_mix with identity pair and forced full masks reconstructs x") {
  // With G(E(.)) the identity and every mask the full image, the class-5
  // image Mix(x, M1) = G(E(M1(x))) = M1(x) = all -1s ... so instead force the
  // reconstruction path: full masks mean Mix = recon exactly.
  ModelBundle m = identity_pair(1.0, 1.0);
  const Tensor x({2, 4}, {0.1, -0.2, 0.3, -0.4, 0.5, -0.6, 0.7, -0.8});
  const Tensor r({2, 4}, {0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2});
  const std::vector<Mask> full(2, Mask{0, 0, 2, 2});
  CHECK(mix(x, r, full, 2) == r);
  // and with recon = x (identity pair applied to unmasked input), mix = x
  CHECK(mix(x, x, full, 2) == x);
}

TEST_CASE("gali_pt feature slots") {
  Rng rng(21);
  ParamStore fs;
  FeatureNet fn = make_feature_net(fs, 4, 6, 3, rng);

  NetSizes sizes;
  sizes.d_x = 4;
  sizes.d_z = 2;
  sizes.width_trunk = 6;
  sizes.width_head = 8;
  sizes.n_classes = 4;
  sizes.slots = {SlotKind::kImage, SlotKind::kLatent, SlotKind::kFeature};
  sizes.feature_dim = fn.feature_dim();
  ModelBundle m = make_model_bundle(sizes, rng);
  const Tensor x = rng.uniform_tensor({3, 4}, -0.9, 0.9);
  const Tensor z = rng.normal_tensor({3, 2});

  Rng cr(23);
  Tape t;
  ChainSet cs = build_gali_pt(t, m, fn, t.constant(x), t.constant(z), cr, false, true);
  REQUIRE(cs.classes.size() == 4);
  // literal reading: classes 2 and 4 share the feature expression M(G(z))
  CHECK(cs.classes[1].slots[2].id == cs.classes[3].slots[2].id);

  Rng cr2(23);
  Tape t2;
  ChainSet cs2 = build_gali_pt(t2, m, fn, t2.constant(x), t2.constant(z), cr2, false, false);
  CHECK(cs2.classes[1].slots[2].id != cs2.classes[3].slots[2].id);

  FeatureNet empty;
  CHECK_THROWS_AS(build_gali_pt(t2, m, empty, t2.constant(x), t2.constant(z), cr2, false),
                  ModelConfigError);
}

TEST_CASE("identity feature map passes x through the feature slot") {
  // lrelu is the identity on positive inputs, so an identity first layer and
  // positive images give features(x) = x.
  ParamStore fs;
  FeatureNet fn;
  DenseLayer l0, l1;
  l0.W = &fs.add("featnet.0.W", Tensor({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}));
  l0.b = &fs.add("featnet.0.b", Tensor({4}));
  l1.W = &fs.add("featnet.1.W", Tensor({3, 4}));
  l1.b = &fs.add("featnet.1.b", Tensor({3}));
  fn.layers = {l0, l1};

  Rng rng(29);
  NetSizes sizes;
  sizes.d_x = 4;
  sizes.d_z = 2;
  sizes.width_trunk = 6;
  sizes.width_head = 8;
  sizes.n_classes = 4;
  sizes.slots = {SlotKind::kImage, SlotKind::kLatent, SlotKind::kFeature};
  sizes.feature_dim = 4;
  ModelBundle m = make_model_bundle(sizes, rng);
  const Tensor x = rng.uniform_tensor({3, 4}, 0.1, 0.9);
  const Tensor z = rng.normal_tensor({3, 2});

  Rng cr(31);
  Tape t;
  ChainSet cs = build_gali_pt(t, m, fn, t.constant(x), t.constant(z), cr, false);
  CHECK(t.value(cs.classes[0].slots[2]) == x);
}
