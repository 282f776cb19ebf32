#include "gali/objectives.hpp"

#include <cmath>

namespace gali {

namespace {

// probability clamp [1e-12, 1 - 1e-12], applied in log space
const double kLogProbLo = std::log(1e-12);
const double kLogProbHi = std::log1p(-1e-12);

void check_classes(Tape& t, const std::vector<Var>& logits) {
  if (logits.size() < 2) throw ShapeError("objective needs at least 2 classes");
  for (const Var& v : logits) {
    if (t.value(v).cols() != static_cast<int>(logits.size()))
      throw ShapeError("logit width does not match class count");
  }
}

// mean over the batch of clamped log D_j on the class-i batch
Var mean_log_prob(Tape& t, Var logits, int j) {
  Var lp = t.col(t.log_softmax_rows(logits), j);
  return t.mean_all(t.clamp(lp, kLogProbLo, kLogProbHi));
}

Var weighted_sum(Tape& t, std::vector<Var> terms, double weight) {
  Var s = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) s = t.add(s, terms[i]);
  return t.scale(s, weight);
}

}  // namespace

double weight_rule(int m_log_terms) {
  if (m_log_terms < 1) throw std::invalid_argument("weight_rule: m must be >= 1");
  return 2.0 / static_cast<double>(m_log_terms);
}

Var discriminator_loss(Tape& t, const std::vector<Var>& logits_per_class) {
  check_classes(t, logits_per_class);
  const int n = static_cast<int>(logits_per_class.size());
  std::vector<Var> terms;
  for (int i = 0; i < n; ++i) terms.push_back(mean_log_prob(t, logits_per_class[i], i));
  return weighted_sum(t, std::move(terms), -weight_rule(n));
}

Var ge_loss_minimax(Tape& t, const std::vector<Var>& logits_per_class) {
  check_classes(t, logits_per_class);
  const int n = static_cast<int>(logits_per_class.size());
  std::vector<Var> terms;
  for (int i = 0; i < n; ++i) terms.push_back(mean_log_prob(t, logits_per_class[i], i));
  return weighted_sum(t, std::move(terms), weight_rule(n));
}

Var ge_loss_misclass(Tape& t, const std::vector<Var>& logits_per_class) {
  check_classes(t, logits_per_class);
  const int n = static_cast<int>(logits_per_class.size());
  std::vector<Var> terms;
  for (int i = 0; i < n; ++i) {
    Var lp = t.log_one_minus_softmax_col(logits_per_class[i], i);
    terms.push_back(t.mean_all(t.clamp(lp, kLogProbLo, kLogProbHi)));
  }
  return weighted_sum(t, std::move(terms), -weight_rule(n));
}

Var ge_loss_pot(Tape& t, const std::vector<Var>& logits_per_class) {
  check_classes(t, logits_per_class);
  const int n = static_cast<int>(logits_per_class.size());
  std::vector<Var> terms;
  for (int i = 0; i < n; ++i) {
    Var lsm = t.log_softmax_rows(logits_per_class[i]);
    for (int k = 0; k < n; ++k) {
      if (k == i) continue;
      terms.push_back(t.mean_all(t.clamp(t.col(lsm, k), kLogProbLo, kLogProbHi)));
    }
  }
  return weighted_sum(t, std::move(terms), -weight_rule(n * (n - 1)));
}

Var alice_l2_term(Tape& t, Var x, Var recon, double lambda) {
  return t.scale(t.mean_all(t.square(t.sub(x, recon))), lambda);
}

std::vector<double> mean_true_class_prob(Tape& t, const std::vector<Var>& logits_per_class) {
  std::vector<double> out;
  for (std::size_t i = 0; i < logits_per_class.size(); ++i) {
    Var p = t.col(t.softmax_rows(logits_per_class[i]), static_cast<int>(i));
    out.push_back(t.value(t.mean_all(p))[0]);
  }
  return out;
}

}  // namespace gali
