#include "gali/config.hpp"

#include <fstream>
#include <sstream>

namespace gali {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long out = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad bool for " + key + ": '" + v + "'");
}

}  // namespace

int TrainConfig::n_classes() const {
  switch (chain) {
    case ChainKind::kAli2:
      return 2;
    case ChainKind::kGali4:
    case ChainKind::kGaliPt:
      return 4;
    case ChainKind::kGali8:
    case ChainKind::kGaliMix:
      return 8;
  }
  return 0;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "dataset") {
    if (value == "grid2d")
      dataset = DatasetKind::kGrid2d;
    else if (value == "bars8")
      dataset = DatasetKind::kBars8;
    else
      throw ConfigError("config: unknown dataset '" + value + "'");
  } else if (key == "chain") {
    if (value == "ali2")
      chain = ChainKind::kAli2;
    else if (value == "gali4")
      chain = ChainKind::kGali4;
    else if (value == "gali8")
      chain = ChainKind::kGali8;
    else if (value == "gali_mix")
      chain = ChainKind::kGaliMix;
    else if (value == "gali_pt")
      chain = ChainKind::kGaliPt;
    else
      throw ConfigError("config: unknown chain '" + value + "'");
  } else if (key == "objective") {
    if (value == "minimax")
      objective = ObjectiveKind::kMinimax;
    else if (value == "misclassification")
      objective = ObjectiveKind::kMisclassification;
    else if (value == "product_of_terms")
      objective = ObjectiveKind::kProductOfTerms;
    else if (value == "ali_baseline")
      objective = ObjectiveKind::kAliBaseline;
    else if (value == "alice_l2")
      objective = ObjectiveKind::kAliceL2;
    else
      throw ConfigError("config: unknown objective '" + value + "'");
  } else if (key == "optimizer") {
    if (value == "adam")
      optimizer = OptimizerKind::kAdam;
    else if (value == "sgd")
      optimizer = OptimizerKind::kSgdMomentum;
    else
      throw ConfigError("config: unknown optimizer '" + value + "'");
  } else if (key == "d_z") {
    d_z = static_cast<int>(parse_long(key, value));
  } else if (key == "width_trunk") {
    width_trunk = static_cast<int>(parse_long(key, value));
  } else if (key == "width_head") {
    width_head = static_cast<int>(parse_long(key, value));
  } else if (key == "lr") {
    lr = parse_double(key, value);
  } else if (key == "batch") {
    batch = static_cast<int>(parse_long(key, value));
  } else if (key == "steps") {
    steps = parse_long(key, value);
  } else if (key == "n_dis") {
    n_dis = static_cast<int>(parse_long(key, value));
  } else if (key == "seed") {
    seed = static_cast<std::uint64_t>(parse_long(key, value));
  } else if (key == "sigma0") {
    sigma0 = parse_double(key, value);
  } else if (key == "tau") {
    tau = parse_double(key, value);
  } else if (key == "lambda_alice") {
    lambda_alice = parse_double(key, value);
  } else if (key == "eval_every") {
    eval_every = parse_long(key, value);
  } else if (key == "out_dir") {
    out_dir = value;
  } else if (key == "featnet") {
    featnet = value;
  } else if (key == "pt_class4_literal") {
    pt_class4_literal = parse_bool(key, value);
  } else if (key == "eval_batch") {
    eval_batch = static_cast<int>(parse_long(key, value));
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

void TrainConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("config: lr must be > 0");
  if (steps < 1) throw ConfigError("config: steps must be >= 1");
  if (n_dis < 1) throw ConfigError("config: n_dis must be >= 1");
  if (batch < 1) throw ConfigError("config: batch must be >= 1");
  if (eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
  if (eval_batch < 2) throw ConfigError("config: eval_batch must be >= 2");
  if (width_trunk < 1 || width_head < 1) throw ConfigError("config: widths must be >= 1");
  if (d_z < 0) throw ConfigError("config: d_z must be >= 0");
  if (lambda_alice < 0.0) throw ConfigError("config: lambda_alice must be >= 0");
  if (sigma0 < 0.0) throw ConfigError("config: sigma0 must be >= 0");
  if (tau < 0.0) throw ConfigError("config: tau must be >= 0");
  if (chain == ChainKind::kGaliMix && dataset != DatasetKind::kBars8)
    throw ConfigError("config: gali_mix requires dataset = bars8");
  if (chain == ChainKind::kGaliPt && featnet.empty())
    throw ConfigError("config: gali_pt requires a trained FeatureNet checkpoint (featnet = PATH)");
  const bool ali_objective =
      objective == ObjectiveKind::kAliBaseline || objective == ObjectiveKind::kAliceL2;
  if (ali_objective && chain != ChainKind::kAli2)
    throw ConfigError("config: ali_baseline/alice_l2 objectives require chain = ali2");
}

TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::string to_string(DatasetKind k) {
  return k == DatasetKind::kGrid2d ? "grid2d" : "bars8";
}

std::string to_string(ChainKind k) {
  switch (k) {
    case ChainKind::kAli2:
      return "ali2";
    case ChainKind::kGali4:
      return "gali4";
    case ChainKind::kGali8:
      return "gali8";
    case ChainKind::kGaliMix:
      return "gali_mix";
    case ChainKind::kGaliPt:
      return "gali_pt";
  }
  return "?";
}

std::string to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::kMinimax:
      return "minimax";
    case ObjectiveKind::kMisclassification:
      return "misclassification";
    case ObjectiveKind::kProductOfTerms:
      return "product_of_terms";
    case ObjectiveKind::kAliBaseline:
      return "ali_baseline";
    case ObjectiveKind::kAliceL2:
      return "alice_l2";
  }
  return "?";
}

}  // namespace gali
