#pragma once

#include <algorithm>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "uctrl/checkpoint.hpp"
#include "uctrl/cluster.hpp"
#include "uctrl/config.hpp"
#include "uctrl/data.hpp"
#include "uctrl/eval.hpp"
#include "uctrl/generation.hpp"
#include "uctrl/io.hpp"
#include "uctrl/trainer.hpp"

namespace uctrl::cli {

struct RunContext {
  data::Dataset train;
  std::optional<data::Dataset> test;
};

// Builds the train/test datasets described by the config. Synthetic data is
// regenerated deterministically from the seed, so every subcommand sees the
// same samples without a dataset file.
inline RunContext load_run_context(const ExperimentConfig& cfg) {
  RunContext ctx;
  switch (cfg.dataset_kind) {
    case DatasetKind::synthetic: {
      Rng rng(mix_seed(cfg.seed, "dataset"));
      data::Dataset all = data::gen_subspace_mixture(
          rng, cfg.dataset_dim, cfg.dataset_classes, cfg.dataset_per_class_dim,
          cfg.dataset_train_per_class + cfg.dataset_test_per_class, cfg.dataset_noise_sigma);
      if (cfg.dataset_test_per_class > 0) {
        auto [train, test] = data::split_per_class(all, cfg.dataset_train_per_class);
        ctx.train = std::move(train);
        ctx.test = std::move(test);
      } else {
        ctx.train = std::move(all);
      }
      break;
    }
    case DatasetKind::cifar10: {
      ctx.train = data::read_cifar10_batch(cfg.dataset_path);
      if (!cfg.dataset_test_path.empty())
        ctx.test = data::read_cifar10_batch(cfg.dataset_test_path);
      break;
    }
    case DatasetKind::ucds: {
      ctx.train = data::read_ucds(cfg.dataset_path);
      if (!cfg.dataset_test_path.empty()) ctx.test = data::read_ucds(cfg.dataset_test_path);
      break;
    }
  }
  return ctx;
}

inline trainer::ModelDims model_dims(const ExperimentConfig& cfg, const RunContext& ctx) {
  trainer::ModelDims dims;
  dims.input_dim = ctx.train.dim();
  dims.feature_dim = cfg.model_feature_dim;
  dims.hidden = cfg.model_hidden;
  return dims;
}

inline trainer::TrainSettings train_settings(const ExperimentConfig& cfg) {
  trainer::TrainSettings s;
  s.variant = cfg.variant;
  s.rate_params = cfg.rate_params;
  s.adam = cfg.train_adam;
  s.batch_size = cfg.train_batch_size;
  s.iterations = cfg.train_iterations;
  s.seed = cfg.seed;
  s.stop_grad_through_decoder = cfg.stop_grad_through_decoder;
  return s;
}

inline std::string checkpoint_path(const ExperimentConfig& cfg) {
  return cfg.out + "/checkpoint_final.uctl";
}

inline rate::FeatureBatch encode_dataset(const model::Network& encoder,
                                         const data::Dataset& ds) {
  auto [z, tape] = model::encode(encoder, ds.x);
  (void)tape;
  return z;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline trainer::TrainState run_train_in_memory(const ExperimentConfig& cfg,
                                               const RunContext& ctx) {
  trainer::TrainState st = trainer::init_train_state(model_dims(cfg, ctx), cfg.seed);
  data::TrainingView view(ctx.train);
  data::AugmentationSpec aug = cfg.aug;
  trainer::run_training(st, view, aug, train_settings(cfg));
  return st;
}

inline int cmd_train(const ExperimentConfig& cfg) {
  io::ensure_dir(cfg.out);
  RunContext ctx = load_run_context(cfg);
  const uint64_t hash = config_hash(cfg);

  trainer::TrainState st = trainer::init_train_state(model_dims(cfg, ctx), cfg.seed);
  data::TrainingView view(ctx.train);

  trainer::CheckpointHook hook;
  if (cfg.train_checkpoint_every > 0) {
    hook = [&](const trainer::TrainState& s) {
      save_checkpoint(cfg.out + "/checkpoint_" + std::to_string(s.iteration) + ".uctl", hash, s);
    };
  }
  trainer::run_training(st, view, cfg.aug, train_settings(cfg), hook,
                        cfg.train_checkpoint_every);

  io::write_text(cfg.out + "/telemetry.csv", io::telemetry_csv(st.telemetry));
  io::write_text(cfg.out + "/config_canonical.cfg", serialize_config(cfg));
  save_checkpoint(checkpoint_path(cfg), hash, st);
  std::cout << "trained " << st.iteration << " iterations -> " << checkpoint_path(cfg) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// cluster
// ---------------------------------------------------------------------------

inline trainer::TrainState load_state(const ExperimentConfig& cfg, const RunContext& ctx,
                                      bool force) {
  trainer::TrainState st = trainer::init_train_state(model_dims(cfg, ctx), cfg.seed);
  load_checkpoint(checkpoint_path(cfg), config_hash(cfg), st, force);
  return st;
}

inline std::string cluster_assignments_csv(const cluster::ClusterResult& res) {
  std::ostringstream os;
  os << "index,hard";
  for (int j = 0; j < res.k; ++j) os << ",p" << j;
  os << '\n';
  for (int i = 0; i < res.membership.samples(); ++i) {
    os << i << ',' << res.hard_labels[i];
    for (int j = 0; j < res.k; ++j) os << ',' << io::fmt(res.membership.p(i, j));
    os << '\n';
  }
  return os.str();
}

inline cluster::ClusterResult fit_clusters_for_config(const ExperimentConfig& cfg,
                                                      const rate::FeatureBatch& z) {
  Rng head_rng(mix_seed(cfg.seed, "head"));
  model::Network head = cluster::make_cluster_head(z.dim(), cfg.model_clusters, head_rng);
  cluster::ClusterFitConfig fit;
  fit.steps = cfg.cluster_steps;
  fit.batch_size = cfg.cluster_batch_size;
  fit.adam = cfg.cluster_adam;
  fit.rate_params = cfg.rate_params;
  fit.seed = cfg.seed;
  return cluster::fit_cluster_head(z, cfg.model_clusters, head, fit);
}

inline int cmd_cluster(const ExperimentConfig& cfg, bool force) {
  io::ensure_dir(cfg.out);
  RunContext ctx = load_run_context(cfg);
  trainer::TrainState st = load_state(cfg, ctx, force);

  rate::FeatureBatch z = encode_dataset(st.encoder, ctx.train);
  cluster::ClusterResult res = fit_clusters_for_config(cfg, z);
  if (res.degenerate)
    std::cerr << "warning: DegenerateClustering (a cluster mass fell below N/(10k))\n";

  io::write_text(cfg.out + "/cluster_assignments.csv", cluster_assignments_csv(res));

  std::ostringstream report;
  report << "k = " << res.k << '\n';
  report << "best_objective = "
         << io::fmt(res.objective_trace.empty()
                        ? 0.0
                        : *std::max_element(res.objective_trace.begin(),
                                            res.objective_trace.end()))
         << '\n';
  report << "degenerate = " << (res.degenerate ? "true" : "false") << '\n';
  if (ctx.train.labeled()) {
    report << "nmi = " << io::fmt(eval::nmi(res.hard_labels, ctx.train.labels)) << '\n';
    report << "cluster_accuracy = "
           << io::fmt(eval::hungarian_accuracy(res.hard_labels, ctx.train.labels)) << '\n';
  }
  io::write_text(cfg.out + "/cluster_report.txt", report.str());
  std::cout << "clustered " << z.count() << " samples into k=" << res.k << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

inline std::vector<int> read_hard_assignments(const std::string& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError("cluster assignments empty: " + path);
  std::vector<int> hard;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto c1 = line.find(',');
    if (c1 == std::string::npos) throw IoError("malformed assignment line: " + line);
    auto c2 = line.find(',', c1 + 1);
    std::string field =
        (c2 == std::string::npos) ? line.substr(c1 + 1) : line.substr(c1 + 1, c2 - c1 - 1);
    hard.push_back(std::stoi(field));
  }
  return hard;
}

inline std::string grid_manifest_csv(const gen::DecodedGrid& grid) {
  std::ostringstream os;
  os << "row,cluster,component";
  for (int s = 0; s < grid.samples_per_row; ++s) os << ",t" << s;
  os << '\n';
  for (const auto& row : grid.manifest) {
    os << row.row << ',' << row.cluster << ',' << row.component;
    for (double t : row.ts) os << ',' << io::fmt(t);
    os << '\n';
  }
  return os.str();
}

inline int cmd_generate(const ExperimentConfig& cfg, bool force) {
  io::ensure_dir(cfg.out);
  RunContext ctx = load_run_context(cfg);
  trainer::TrainState st = load_state(cfg, ctx, force);

  rate::FeatureBatch z = encode_dataset(st.encoder, ctx.train);
  std::vector<int> hard = read_hard_assignments(cfg.out + "/cluster_assignments.csv");
  if (static_cast<int>(hard.size()) != z.count())
    throw IoError("cluster assignments do not match the dataset size");

  std::vector<gen::ClusterModel> models =
      gen::fit_cluster_models(z, hard, cfg.model_clusters, cfg.generate_rank);
  for (const auto& m : models)
    if (!m.present) std::cerr << "notice: cluster " << m.cluster << " is empty, skipped\n";

  Rng rng(mix_seed(cfg.seed, "generate"));
  gen::DecodedGrid grid =
      gen::decode_grid(st.decoder, models, cfg.generate_components, cfg.generate_samples, rng,
                       cfg.generate_noise_scale, cfg.generate_t_span);

  data::Dataset out_ds;
  out_ds.x = grid.samples;
  out_ds.k_true = cfg.model_clusters;
  for (const auto& row : grid.manifest)
    for (int s = 0; s < grid.samples_per_row; ++s) out_ds.labels.push_back(row.cluster);
  data::write_ucds(out_ds, cfg.out + "/generated.ucds");
  io::write_text(cfg.out + "/grid_manifest.csv", grid_manifest_csv(grid));

  if (cfg.dataset_kind == DatasetKind::cifar10) {
    io::write_tile_sheet(cfg.out + "/grid_sheet.ppm", grid.samples, 3, 32, 32,
                         grid.samples_per_row);
  } else {
    std::cerr << "notice: dataset is not image-shaped; PPM sheet skipped\n";
  }
  std::cout << "generated " << grid.samples.cols() << " samples over "
            << grid.manifest.size() << " grid rows\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

inline eval::EvalReport evaluate_features(const ExperimentConfig& cfg,
                                          const rate::FeatureBatch& z_train,
                                          const std::vector<int>& y_train,
                                          const rate::FeatureBatch& z_test,
                                          const std::vector<int>& y_test) {
  eval::EvalReport report;
  eval::ProbeConfig probe;
  probe.steps = cfg.probe_steps;
  probe.adam = cfg.train_adam;
  probe.seed = cfg.seed;
  auto pr = eval::linear_probe_full(z_train, y_train, z_test, y_test, probe);
  report.probe_accuracy = pr.accuracy;

  eval::CosineMargin margin = eval::cosine_margin(z_test, y_test);
  report.cosine_margin = margin.margin;
  report.per_class = margin.per_class;

  // per-class probe recall
  int k = 0;
  for (int v : y_test) k = std::max(k, v + 1);
  std::vector<long> hits(k, 0), totals(k, 0);
  for (size_t i = 0; i < y_test.size(); ++i) {
    ++totals[y_test[i]];
    if (pr.predictions[i] == y_test[i]) ++hits[y_test[i]];
  }
  for (auto& row : report.per_class)
    if (row.label >= 0 && row.label < k && totals[row.label] > 0)
      row.probe_recall = static_cast<double>(hits[row.label]) / totals[row.label];
  return report;
}

inline int cmd_eval(const ExperimentConfig& cfg, bool force) {
  io::ensure_dir(cfg.out);
  RunContext ctx = load_run_context(cfg);
  if (!ctx.train.labeled())
    throw ConfigError("eval requires a labeled training dataset");
  if (!ctx.test || !ctx.test->labeled())
    throw ConfigError("eval requires a labeled test dataset (dataset.test_per_class or "
                      "dataset.test_path)");
  trainer::TrainState st = load_state(cfg, ctx, force);

  rate::FeatureBatch z_train = encode_dataset(st.encoder, ctx.train);
  rate::FeatureBatch z_test = encode_dataset(st.encoder, *ctx.test);

  eval::EvalReport report =
      evaluate_features(cfg, z_train, ctx.train.labels, z_test, ctx.test->labels);

  // cluster metrics against the train split
  cluster::ClusterResult res = fit_clusters_for_config(cfg, z_train);
  report.nmi = eval::nmi(res.hard_labels, ctx.train.labels);
  report.cluster_accuracy = eval::hungarian_accuracy(res.hard_labels, ctx.train.labels);
  report.has_cluster_metrics = true;

  std::vector<int> order = eval::order_by_labels(ctx.test->labels);
  Matrix heat = eval::cosine_heatmap(z_test, order);
  io::write_text(cfg.out + "/heatmap.csv", io::matrix_csv(heat));
  io::write_pgm(cfg.out + "/heatmap.pgm", heat);

  // feature export (in place of embedding visualizations)
  data::Dataset feat_train;
  feat_train.x = z_train.z;
  feat_train.labels = ctx.train.labels;
  feat_train.k_true = ctx.train.k_true;
  data::write_ucds(feat_train, cfg.out + "/features_train.ucds");
  data::Dataset feat_test;
  feat_test.x = z_test.z;
  feat_test.labels = ctx.test->labels;
  feat_test.k_true = ctx.test->k_true;
  data::write_ucds(feat_test, cfg.out + "/features_test.ucds");

  io::write_text(cfg.out + "/eval_report.txt", io::eval_report_text(report));
  io::write_text(cfg.out + "/eval_report.csv", io::eval_report_csv(report));
  io::write_text(cfg.out + "/per_class.csv", io::per_class_csv(report.per_class));
  std::cout << "probe_accuracy=" << io::fmt(report.probe_accuracy)
            << " nmi=" << io::fmt(report.nmi)
            << " cluster_accuracy=" << io::fmt(report.cluster_accuracy)
            << " cosine_margin=" << io::fmt(report.cosine_margin) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblationRow {
  trainer::VariantTag variant;
  double probe_acc = 0.0;
  double nmi = 0.0;
  double final_r = 0.0;
  double final_dr = 0.0;
  double final_c1 = 0.0;
  double final_c2 = 0.0;
};

inline AblationRow run_ablation_variant(const ExperimentConfig& base, const RunContext& ctx,
                                        trainer::VariantTag tag) {
  ExperimentConfig cfg = base;
  cfg.variant.tag = tag;

  trainer::TrainState st = run_train_in_memory(cfg, ctx);
  AblationRow row;
  row.variant = tag;
  if (!st.telemetry.empty()) {
    const auto& last = st.telemetry.back();
    row.final_r = last.expansion;
    row.final_dr = last.pair_dr;
    row.final_c1 = last.aug_mean;
    row.final_c2 = last.selfc_mean;
  }

  rate::FeatureBatch z_train = encode_dataset(st.encoder, ctx.train);
  cluster::ClusterResult res = fit_clusters_for_config(cfg, z_train);
  row.nmi = eval::nmi(res.hard_labels, ctx.train.labels);

  if (ctx.test && ctx.test->labeled()) {
    rate::FeatureBatch z_test = encode_dataset(st.encoder, *ctx.test);
    eval::ProbeConfig probe;
    probe.steps = cfg.probe_steps;
    probe.adam = cfg.train_adam;
    probe.seed = cfg.seed;
    row.probe_acc =
        eval::linear_probe(z_train, ctx.train.labels, z_test, ctx.test->labels, probe);
  }
  return row;
}

inline int cmd_ablate(const ExperimentConfig& cfg) {
  if (cfg.ablate_variants.empty())
    throw ConfigError("ablate.variants is empty; list the objective variants to compare");
  io::ensure_dir(cfg.out);
  RunContext ctx = load_run_context(cfg);
  if (!ctx.train.labeled()) throw ConfigError("ablate requires a labeled dataset");

  std::ostringstream os;
  os << "variant,probe_acc,nmi,final_R,final_dR,final_c1,final_c2\n";
  for (trainer::VariantTag tag : cfg.ablate_variants) {
    AblationRow row = run_ablation_variant(cfg, ctx, tag);
    os << trainer::to_string(row.variant) << ',' << io::fmt(row.probe_acc) << ','
       << io::fmt(row.nmi) << ',' << io::fmt(row.final_r) << ',' << io::fmt(row.final_dr) << ','
       << io::fmt(row.final_c1) << ',' << io::fmt(row.final_c2) << '\n';
    std::cout << "variant " << trainer::to_string(row.variant)
              << " probe_acc=" << io::fmt(row.probe_acc) << "\n";
  }
  io::write_text(cfg.out + "/ablation.csv", os.str());
  return 0;
}

}  // namespace uctrl::cli
