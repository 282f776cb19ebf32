#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

#include "gali/checkpoint.hpp"
#include "gali/config.hpp"
#include "gali/metrics.hpp"

namespace gali {

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);

/// Full training run: n_dis discriminator updates then one generator-encoder
/// update per step, decaying input noise on discriminator image slots,
/// metrics rows every eval_every steps (plus the final step), checkpoint and
/// image dumps in out_dir. Deterministic per (config, seed). NaN losses throw
/// NumericalError after writing a diagnostic dump.
MetricsRow run_train(const TrainConfig& cfg, std::ostream* log = nullptr);

/// Recomputes every applicable metric for a checkpoint on fresh data and
/// writes out_dir/report.txt.
MetricsRow run_eval(const TrainConfig& cfg, const std::string& ckpt_path);

/// Writes original/masked/inpainted triptychs (inpaint.pgm) and the
/// region-restricted MSEs (report.txt) for a checkpoint.
void run_inpaint(const TrainConfig& cfg, const std::string& ckpt_path);

/// Finite-difference suite over every tape op and all five objective kinds on
/// a tiny bundle; prints one line per check, returns the number of failures.
int run_gradcheck(std::ostream& out);

/// Like grad_check but only sweeps parameters the predicate accepts (needed
/// when a graph holds some parameters as constants, e.g. the discriminator
/// inside a generator-encoder loss). Each entry is compared against central
/// differences at every step in `steps` and keeps its best match: deep
/// compositions have entries whose magnitudes differ by 5+ orders, so no
/// single step is simultaneously above fp-roundoff and below truncation for
/// all of them.
double grad_check_filtered(ParamStore& params, const std::function<Var(Tape&)>& build,
                           const std::vector<double>& steps,
                           const std::function<bool(const std::string&)>& filter);

/// Images [n, side*side] in (-1,1) packed row-major into a binary PGM grid.
void write_pgm_montage(const std::string& path, const Tensor& images, int side, int tiles_per_row);

/// Builds the net from the checkpoint's own shapes and fills it.
Bars8FeatureNet load_bars8_feature_net(const std::string& path);

struct EvalLosses {
  double loss_d = 0.0;
  double loss_ge = 0.0;
  double grad_norm_d = 0.0;
  double grad_norm_ge = 0.0;
  std::vector<double> true_class_prob;
};

/// Both losses and gradient norms at the current parameters on one batch.
EvalLosses eval_losses(ModelBundle& bundle, const FeatureNet* featnet, const TrainConfig& cfg,
                       const Tensor& x, const Tensor& z, double sigma, Rng& rng);

}  // namespace gali
