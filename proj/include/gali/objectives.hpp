#pragma once

#include <vector>

#include "gali/tape.hpp"

namespace gali {

enum class ObjectiveKind { kMinimax, kMisclassification, kProductOfTerms, kAliBaseline, kAliceL2 };

/// Objectives with m log terms are weighted by 2/m, which gives weight 1 to
/// the two-term bidirectional baseline.
double weight_rule(int m_log_terms);

struct LossReport {
  double loss_d = 0.0;
  double loss_ge = 0.0;
  std::vector<double> true_class_prob;  // per-class mean softmax probability
  double grad_norm_ge = 0.0;
};

/// Cross-entropy over classes: -sum_i mean log D_i(class-i batch), weighted
/// by 2/n. Minimized by the discriminator. `logits[i]` are the discriminator
/// outputs on the class-i batch, shape [batch, n].
Var discriminator_loss(Tape& t, const std::vector<Var>& logits_per_class);

/// The same value with opposite sign: G,E minimize sum_i mean log D_i.
Var ge_loss_minimax(Tape& t, const std::vector<Var>& logits_per_class);

/// Negated misclassification likelihood: G,E maximize
/// sum_i mean log(1 - D_i(class-i batch)), weighted 2/n.
Var ge_loss_misclass(Tape& t, const std::vector<Var>& logits_per_class);

/// Negated product-of-terms: G,E maximize
/// sum_i mean sum_{k != i} log D_k(class-i batch), weighted 2/(n(n-1)).
Var ge_loss_pot(Tape& t, const std::vector<Var>& logits_per_class);

/// lambda * mean squared error between x and its reconstruction.
Var alice_l2_term(Tape& t, Var x, Var recon, double lambda);

/// Mean softmax probability of the true class, one entry per class batch.
std::vector<double> mean_true_class_prob(Tape& t, const std::vector<Var>& logits_per_class);

}  // namespace gali
