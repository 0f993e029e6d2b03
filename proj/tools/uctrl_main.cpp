#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "uctrl/cli.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_override;
  uint64_t seed_override = 0;
  bool seed_set = false;
  bool force = false;
};

void add_common(CLI::App* sub, CommonOpts& opts) {
  sub->add_option("--config", opts.config_path, "experiment config file")->required();
  sub->add_option("--out", opts.out_override, "output directory (overrides config `out`)");
  sub->add_option("--seed", opts.seed_override, "seed override")
      ->each([&](const std::string&) { opts.seed_set = true; });
  sub->add_flag("--force", opts.force, "skip the checkpoint config-hash check");
}

uctrl::cli::ExperimentConfig load(const CommonOpts& opts) {
  uctrl::cli::ExperimentConfig cfg = uctrl::cli::parse_config_file(opts.config_path);
  if (!opts.out_override.empty()) cfg.out = opts.out_override;
  if (opts.seed_set) cfg.seed = opts.seed_override;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uctrl: unsupervised closed-loop transcription experiments"};
  app.require_subcommand(1);

  CommonOpts train_opts, cluster_opts, generate_opts, eval_opts, ablate_opts;
  CLI::App* train = app.add_subcommand("train", "run the maximin training loop");
  add_common(train, train_opts);
  CLI::App* cluster = app.add_subcommand("cluster", "fit the rate-reduction cluster head");
  add_common(cluster, cluster_opts);
  CLI::App* generate = app.add_subcommand("generate", "per-cluster PC sweeps through the decoder");
  add_common(generate, generate_opts);
  CLI::App* eval_cmd = app.add_subcommand("eval", "linear probe, margins, |Z^T Z| heat map");
  add_common(eval_cmd, eval_opts);
  CLI::App* ablate = app.add_subcommand("ablate", "compare objective variants on one dataset");
  add_common(ablate, ablate_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return uctrl::cli::cmd_train(load(train_opts));
    if (cluster->parsed()) return uctrl::cli::cmd_cluster(load(cluster_opts), cluster_opts.force);
    if (generate->parsed())
      return uctrl::cli::cmd_generate(load(generate_opts), generate_opts.force);
    if (eval_cmd->parsed()) return uctrl::cli::cmd_eval(load(eval_opts), eval_opts.force);
    if (ablate->parsed()) return uctrl::cli::cmd_ablate(load(ablate_opts));
  } catch (const uctrl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const uctrl::BadRecordSize& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const uctrl::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const uctrl::NonFiniteLoss& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return 4;
  } catch (const uctrl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  }
  return 1;
}
