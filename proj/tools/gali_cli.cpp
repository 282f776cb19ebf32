#include <CLI11.hpp>
#include <iostream>

#include "gali/oracle.hpp"
#include "gali/train.hpp"

namespace {

// exit codes: 0 ok, 2 config, 3 numerical, 4 checkpoint
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCheckpoint = 4;

gali::TrainConfig config_with_overrides(const std::string& path, const std::string& seed_flag,
                                        const std::string& out_flag) {
  gali::TrainConfig cfg = gali::load_config(path);
  if (!seed_flag.empty()) cfg.set("seed", seed_flag);
  if (!out_flag.empty()) cfg.set("out_dir", out_flag);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale adversarially learned inference lab"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, seed_flag, out_flag;
  std::uint64_t oracle_seed = 1234;
  int oracle_trials = 20;
  std::string featnet_out = "featnet.gali";
  std::uint64_t featnet_seed = 99;
  int featnet_steps = 400;

  CLI::App* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--seed", seed_flag, "override the config seed");
  train->add_option("--out", out_flag, "override the output directory");

  CLI::App* eval = app.add_subcommand("eval", "recompute all metrics for a checkpoint");
  eval->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  eval->add_option("--config", config_path, "config file")->required();
  eval->add_option("--out", out_flag, "override the output directory");

  CLI::App* oracle_cmd = app.add_subcommand("oracle-check", "verify the discrete-optimum identities");
  oracle_cmd->add_option("--trials", oracle_trials, "number of random instances");
  oracle_cmd->add_option("--seed", oracle_seed, "instance seed");

  app.add_subcommand("gradcheck", "finite-difference check of every op and objective");

  CLI::App* inpaint = app.add_subcommand("inpaint", "write inpainting triptychs for a checkpoint");
  inpaint->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  inpaint->add_option("--config", config_path, "config file")->required();
  inpaint->add_option("--out", out_flag, "override the output directory");

  CLI::App* featnet = app.add_subcommand("make-featnet", "train and save the frozen bars8 classifier");
  featnet->add_option("--out", featnet_out, "output checkpoint path");
  featnet->add_option("--seed", featnet_seed, "training seed");
  featnet->add_option("--steps", featnet_steps, "training steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (app.got_subcommand("train")) {
      const gali::TrainConfig cfg = config_with_overrides(config_path, seed_flag, out_flag);
      const gali::MetricsRow row = gali::run_train(cfg, &std::cout);
      std::cout << gali::metrics_csv_header() << "\n" << gali::metrics_csv_line(row) << "\n";
    } else if (app.got_subcommand("eval")) {
      const gali::TrainConfig cfg = config_with_overrides(config_path, seed_flag, out_flag);
      const gali::MetricsRow row = gali::run_eval(cfg, ckpt_path);
      std::cout << gali::metrics_csv_header() << "\n" << gali::metrics_csv_line(row) << "\n";
    } else if (app.got_subcommand("oracle-check")) {
      const gali::oracle::OracleReport rep = gali::oracle::verify_identities(oracle_seed, oracle_trials);
      std::cout << rep.text;
      return rep.ok ? 0 : 1;
    } else if (app.got_subcommand("gradcheck")) {
      return gali::run_gradcheck(std::cout) == 0 ? 0 : 1;
    } else if (app.got_subcommand("inpaint")) {
      const gali::TrainConfig cfg = config_with_overrides(config_path, seed_flag, out_flag);
      gali::run_inpaint(cfg, ckpt_path);
    } else if (app.got_subcommand("make-featnet")) {
      gali::Bars8FeatureNet net = gali::train_bars8_feature_net(featnet_seed, 32, featnet_steps);
      gali::save_feature_net(net.params, featnet_out);
      std::cout << "feature net trained to " << net.train_accuracy * 100.0
                << "% train accuracy, saved to " << featnet_out << "\n";
      if (net.train_accuracy < 0.95) {
        std::cerr << "error: training accuracy below 95%\n";
        return kExitNumerical;
      }
    }
  } catch (const gali::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const gali::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const gali::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
