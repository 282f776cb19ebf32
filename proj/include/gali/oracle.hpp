#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gali/tensor.hpp"

namespace gali::oracle {

/// Explicit finite joint distribution over (image index, latent index).
struct DiscreteJoint {
  Tensor table;  // [Nx, Nz], entries >= 0, sum 1
  int nx() const { return table.rows(); }
  int nz() const { return table.cols(); }
};

DiscreteJoint make_joint(int nx, int nz, std::vector<double> probs);
DiscreteJoint normalized(Tensor nonneg);

/// Per-cell class distribution, [Nx, Nz, n].
struct DiscreteDiscriminator {
  Tensor table;
  int nx() const { return table.dim(0); }
  int nz() const { return table.dim(1); }
  int n() const { return table.dim(2); }
  double at(int x, int z, int i) const {
    return table[(static_cast<std::size_t>(x) * nz() + z) * n() + i];
  }
  double& at(int x, int z, int i) {
    return table[(static_cast<std::size_t>(x) * nz() + z) * n() + i];
  }
};

/// D*_i = p_i / sum_j p_j cellwise; cells where every p_j vanishes get the
/// uniform 1/n vector.
DiscreteDiscriminator optimal_discriminator(const std::vector<DiscreteJoint>& ps);

/// sum_i sum_cells p_i log D_i, with 0 log 0 := 0.
double value_minimax(const std::vector<DiscreteJoint>& ps, const DiscreteDiscriminator& d);

/// sum_i sum_cells p_i sum_{k != i} log D_k, with 0 log 0 := 0.
double value_pot(const std::vector<DiscreteJoint>& ps, const DiscreteDiscriminator& d);

/// sum_i w_i KL(p_i || sum_j w_j p_j). Note: the closed-form identities below
/// use the sum-of-KL convention, which is n * generalized_jsd at uniform
/// weights.
double generalized_jsd(const std::vector<DiscreteJoint>& ps, const std::vector<double>& weights);

/// KL sum against the uniform mixture: sum_i KL(p_i || mean(ps)).
double jsd_kl_sum(const std::vector<DiscreteJoint>& ps);

struct OracleReport {
  int trials = 0;
  int n_classes = 0;
  double max_identity_violation = 0.0;   // |value_minimax(D*) - (-n ln n^... ) - jsd|
  double max_bound_violation = 0.0;      // positive part of value_pot(D*) - bound
  double min_bound_slack_nonequal = 0.0; // smallest strict slack on non-equal instances
  double max_perturb_gain = 0.0;         // best improvement found over D*
  bool all_equal_attains_minimax = false;
  bool all_equal_attains_pot = false;
  bool ok = false;
  std::string text;
};

/// Random-instance verification of the closed-form optimum results:
///   value_minimax(ps, D*) = -ln(256) + sum_i KL(p_i || mean)   (n = 4)
///   value_pot(ps, D*)    <= -12 ln 4 - sum_i KL(p_i || mean), equality iff
///   all ps equal (the report derives the constant: 12 log terms, so
///   -log 4^12 rather than -log 4^9), and no simplex perturbation of D*
///   improves value_minimax. Violations above 1e-8 fail the report.
OracleReport verify_identities(std::uint64_t seed, int trials);

}  // namespace gali::oracle
