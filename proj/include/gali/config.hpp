#pragma once

#include <cstdint>
#include <string>

#include "gali/chains.hpp"
#include "gali/objectives.hpp"

namespace gali {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DatasetKind { kGrid2d, kBars8 };
enum class OptimizerKind { kAdam, kSgdMomentum };

/// Complete, serializable description of one experiment. File format: UTF-8
/// lines `key = value`; `#` starts a comment; CLI flags override file values.
struct TrainConfig {
  DatasetKind dataset = DatasetKind::kGrid2d;
  ChainKind chain = ChainKind::kAli2;
  ObjectiveKind objective = ObjectiveKind::kProductOfTerms;
  int d_z = 0;  // 0 = dataset default (grid2d: 2, bars8: 8)
  int width_trunk = 128;
  int width_head = 256;
  double lr = 1e-4;
  int batch = 128;
  long steps = 1000;
  int n_dis = 1;
  std::uint64_t seed = 1;
  double sigma0 = 0.3;
  double tau = 0.0;  // 0 = steps / 4
  double lambda_alice = 1.0;
  long eval_every = 500;
  std::string out_dir = "out";
  std::string featnet;  // path to a trained FeatureNet checkpoint
  OptimizerKind optimizer = OptimizerKind::kAdam;
  bool pt_class4_literal = true;
  int eval_batch = 256;

  int d_x() const { return dataset == DatasetKind::kGrid2d ? 2 : 64; }
  int latent_dim() const { return d_z > 0 ? d_z : (dataset == DatasetKind::kGrid2d ? 2 : 8); }
  int n_classes() const;
  double tau_steps() const { return tau > 0.0 ? tau : static_cast<double>(steps) / 4.0; }

  void set(const std::string& key, const std::string& value);
  void validate() const;
};

TrainConfig load_config(const std::string& path);

std::string to_string(DatasetKind k);
std::string to_string(ChainKind k);
std::string to_string(ObjectiveKind k);

}  // namespace gali
