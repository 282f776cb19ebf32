#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gali/oracle.hpp"
#include "gali/rng.hpp"

using namespace gali;
using namespace gali::oracle;

namespace {

DiscreteJoint random_positive(Rng& rng, int nx, int nz) {
  Tensor t({nx, nz});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.05 + rng.uniform();
  return normalized(std::move(t));
}

std::vector<DiscreteJoint> random_family(Rng& rng, int n, int nx, int nz) {
  std::vector<DiscreteJoint> ps;
  for (int i = 0; i < n; ++i) ps.push_back(random_positive(rng, nx, nz));
  return ps;
}

}  // namespace

TEST_CASE("joint validation") {
  CHECK_THROWS_AS(make_joint(1, 2, {0.5, 0.4}), DomainError);
  CHECK_THROWS_AS(make_joint(1, 2, {-0.1, 1.1}), DomainError);
  const DiscreteJoint j = make_joint(1, 2, {0.25, 0.75});
  CHECK(j.nx() == 1);
  CHECK(j.nz() == 2);
}

TEST_CASE("optimal discriminator symmetry and point masses") {
  const DiscreteJoint p = make_joint(2, 2, {0.1, 0.2, 0.3, 0.4});
  const auto d = optimal_discriminator({p, p, p, p});
  for (int x = 0; x < 2; ++x)
    for (int z = 0; z < 2; ++z)
      for (int i = 0; i < 4; ++i) CHECK(d.at(x, z, i) == doctest::Approx(0.25).epsilon(1e-14));

  // p1 owns cell (0,0), the others sit at (1,1); empty cells go uniform
  const DiscreteJoint p1 = make_joint(2, 2, {1, 0, 0, 0});
  const DiscreteJoint rest = make_joint(2, 2, {0, 0, 0, 1});
  const auto d2 = optimal_discriminator({p1, rest, rest, rest});
  CHECK(d2.at(0, 0, 0) == 1.0);
  CHECK(d2.at(1, 1, 0) == 0.0);
  CHECK(d2.at(1, 1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(d2.at(0, 1, 2) == 0.25);  // no mass anywhere: uniform

  const DiscreteJoint small = make_joint(1, 2, {0.5, 0.5});
  CHECK_THROWS_AS(optimal_discriminator({p, small}), ShapeError);
}

TEST_CASE("value_minimax closed forms") {
  Rng rng(31);
  const auto equal = std::vector<DiscreteJoint>(4, random_positive(rng, 3, 3));
  const auto dstar = optimal_discriminator(equal);
  CHECK(value_minimax(equal, dstar) == doctest::Approx(-std::log(256.0)).epsilon(1e-12));

  // a uniform discriminator scores -4 ln 4 for any distributions
  DiscreteDiscriminator uniform{Tensor::full({3, 3, 4}, 0.25)};
  const auto ps = random_family(rng, 4, 3, 3);
  CHECK(value_minimax(ps, uniform) == doctest::Approx(-4.0 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("minimax identity against an independent JSD computation") {
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const int nx = 2 + rng.uniform_int(0, 4);
    const int nz = 2 + rng.uniform_int(0, 4);
    const auto ps = random_family(rng, 4, nx, nz);
    const double v = value_minimax(ps, optimal_discriminator(ps));
    CHECK(std::fabs(v - (-std::log(256.0) + jsd_kl_sum(ps))) < 1e-9);
  }
}

TEST_CASE("value_pot closed forms and the corrected constant") {
  Rng rng(35);
  const auto equal = std::vector<DiscreteJoint>(4, random_positive(rng, 4, 2));
  const auto dstar = optimal_discriminator(equal);
  // direct substitution: 4 classes x 3 wrong terms x ln(1/4) = -12 ln 4,
  // i.e. -log(4^12), not the printed -log(4^9)
  CHECK(value_pot(equal, dstar) == doctest::Approx(-12.0 * std::log(4.0)).epsilon(1e-12));

  // n = 2, equal: 2 classes x 1 wrong term x ln(1/2)
  const auto equal2 = std::vector<DiscreteJoint>(2, random_positive(rng, 3, 3));
  CHECK(value_pot(equal2, optimal_discriminator(equal2)) ==
        doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("pot bound with equality iff all distributions match") {
  Rng rng(37);
  const double bound_const = -12.0 * std::log(4.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ps = random_family(rng, 4, 3, 4);
    const double v = value_pot(ps, optimal_discriminator(ps));
    const double bound = bound_const - jsd_kl_sum(ps);
    CHECK(v <= bound + 1e-9);
    CHECK(bound - v > 1e-9);  // strict slack away from equality
  }
  const auto equal = std::vector<DiscreteJoint>(4, random_positive(rng, 3, 4));
  const double v = value_pot(equal, optimal_discriminator(equal));
  CHECK(std::fabs(v - (bound_const - jsd_kl_sum(equal))) < 1e-12);
}

TEST_CASE("generalized jsd") {
  Rng rng(39);
  const auto equal = std::vector<DiscreteJoint>(3, random_positive(rng, 3, 3));
  CHECK(generalized_jsd(equal, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == doctest::Approx(0.0).epsilon(1e-14));

  // two disjoint point masses at weights (1/2, 1/2) sit ln 2 apart
  const DiscreteJoint a = make_joint(2, 1, {1, 0});
  const DiscreteJoint b = make_joint(2, 1, {0, 1});
  CHECK(generalized_jsd({a, b}, {0.5, 0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  for (int trial = 0; trial < 1000; ++trial) {
    const auto ps = random_family(rng, 4, 2, 3);
    CHECK(generalized_jsd(ps, {0.25, 0.25, 0.25, 0.25}) >= 0.0);
  }

  CHECK_THROWS_AS(generalized_jsd(equal, {0.5, 0.5}), ShapeError);
  CHECK_THROWS_AS(generalized_jsd(equal, {0.5, 0.4, 0.2}), DomainError);
}

TEST_CASE("mixing toward the mean strictly decreases jsd") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    auto ps = random_family(rng, 4, 3, 3);
    const double before = jsd_kl_sum(ps);
    // move p_0 toward the mean of the others
    Tensor mean({3, 3});
    for (int i = 1; i < 4; ++i)
      for (std::size_t c = 0; c < mean.size(); ++c)
        mean[c] += ps[static_cast<std::size_t>(i)].table[c] / 3.0;
    for (double t : {0.25, 0.5, 1.0}) {
      auto mixed = ps;
      for (std::size_t c = 0; c < mean.size(); ++c)
        mixed[0].table[c] = (1.0 - t) * ps[0].table[c] + t * mean[c];
      CHECK(jsd_kl_sum(mixed) < before);
    }
  }
}

TEST_CASE("no simplex perturbation improves the optimal discriminator") {
  Rng rng(43);
  for (int trial = 0; trial < 5; ++trial) {
    const auto ps = random_family(rng, 4, 3, 3);
    const auto dstar = optimal_discriminator(ps);
    const double v = value_minimax(ps, dstar);
    for (int p = 0; p < 200; ++p) {
      DiscreteDiscriminator d2 = dstar;
      for (int x = 0; x < 3; ++x)
        for (int z = 0; z < 3; ++z) {
          double r[4], s = 0.0;
          for (double& e : r) {
            e = -std::log(1.0 - rng.uniform() + 1e-300);
            s += e;
          }
          const double t = 0.5 * rng.uniform();
          for (int i = 0; i < 4; ++i)
            d2.at(x, z, i) = (1.0 - t) * dstar.at(x, z, i) + t * r[i] / s;
        }
      CHECK(value_minimax(ps, d2) <= v + 1e-9);
    }
  }
}

TEST_CASE("verify_identities end to end") {
  const OracleReport rep = verify_identities(1234, 20);
  CHECK(rep.ok);
  CHECK(rep.max_identity_violation < 1e-8);
  CHECK(rep.max_bound_violation <= 1e-8);
  CHECK(rep.max_perturb_gain <= 1e-8);
  CHECK(rep.all_equal_attains_minimax);
  CHECK(rep.all_equal_attains_pot);
  CHECK(rep.text.find("-log(4^12)") != std::string::npos);  // flags the corrected constant
}
