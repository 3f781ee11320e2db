// costloss CLI: seeded experiment sweeps plus penalty-matrix utilities.
//
//   costloss run --experiment masked --dataset blobs --loss bilinear \
//       --alpha-grid 0 0.5 0.9 --n-grid 10 30 50 --reps 10 --seed 1 \
//       --epochs 10 --out out/masked
//   costloss penalty mask --k 10 --n 50 --seed 7 --cost 1 --out mask.csv
//   costloss penalty hierarchical --k 10 --super 5 --within 1 --across 5 --out A.csv
//   costloss penalty validate --in A.csv
//
// `run --config file.json` reads a JSON file whose keys mirror the flags;
// flags given on the command line override the file.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "costloss/experiment.hpp"

using costloss::ExperimentConfig;
using nlohmann::json;

namespace {

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  json j = json::parse(in);

  if (j.contains("experiment")) cfg.kind = costloss::parse_kind(j["experiment"]);
  if (j.contains("dataset")) cfg.dataset = costloss::parse_dataset(j["dataset"]);
  if (j.contains("loss")) cfg.variant = costloss::parse_variant(j["loss"]);
  if (j.contains("alpha_grid")) cfg.alpha_grid = j["alpha_grid"].get<std::vector<double>>();
  if (j.contains("n_grid")) cfg.n_grid = j["n_grid"].get<std::vector<int>>();
  if (j.contains("reps")) cfg.repetitions = j["reps"];
  if (j.contains("seed")) cfg.base_seed = j["seed"];
  if (j.contains("out")) cfg.out_dir = j["out"];
  if (j.contains("mnist_dir")) cfg.mnist_dir = j["mnist_dir"];
  if (j.contains("masked_cost")) cfg.masked_cost = j["masked_cost"];
  if (j.contains("within_cost")) cfg.within_cost = j["within_cost"];
  if (j.contains("across_cost")) cfg.across_cost = j["across_cost"];
  if (j.contains("small_sample_classes")) cfg.small_sample_classes = j["small_sample_classes"];
  if (j.contains("threads")) cfg.threads = j["threads"];
  if (j.contains("hidden")) cfg.hidden_sizes = j["hidden"].get<std::vector<int>>();
  if (j.contains("activation"))
    cfg.activation = j["activation"] == "tanh" ? costloss::Activation::kTanh
                                               : costloss::Activation::kRelu;
  if (j.contains("epochs")) cfg.train.epochs = j["epochs"];
  if (j.contains("batch_size")) cfg.train.batch_size = j["batch_size"];
  if (j.contains("learning_rate")) cfg.train.learning_rate = j["learning_rate"];
  if (j.contains("momentum")) cfg.train.momentum = j["momentum"];
  if (j.contains("test_per_class")) cfg.test_per_class = j["test_per_class"];
  if (j.contains("require_trends")) cfg.trends_required = j["require_trends"];
  if (j.contains("blobs")) {
    const json& b = j["blobs"];
    if (b.contains("k")) cfg.blobs.k = b["k"];
    if (b.contains("d")) cfg.blobs.d = b["d"];
    if (b.contains("n_per_class")) cfg.blobs.n_per_class = b["n_per_class"];
    if (b.contains("center_spread")) cfg.blobs.center_spread = b["center_spread"];
    if (b.contains("within_sigma")) cfg.blobs.within_sigma = b["within_sigma"];
    if (b.contains("super_classes")) cfg.blobs.super_classes = b["super_classes"];
    if (b.contains("group_spread")) cfg.blobs.group_spread = b["group_spread"];
  }
  if (j.contains("trends")) {
    const json& t = j["trends"];
    if (t.contains("masked_max_ratio")) cfg.trends.masked_max_ratio = t["masked_max_ratio"];
    if (t.contains("masked_alpha_mid")) cfg.trends.masked_alpha_mid = t["masked_alpha_mid"];
    if (t.contains("masked_max_error_increase_pp"))
      cfg.trends.masked_max_error_increase_pp = t["masked_max_error_increase_pp"];
  }
}

int run_command(const CLI::App& cmd, ExperimentConfig cfg, const std::string& config_path,
                const std::string& experiment, const std::string& dataset,
                const std::string& loss, const std::string& activation) {
  if (!config_path.empty()) apply_config_file(cfg, config_path);

  // Flags given on the command line win over the config file.
  if (cmd.count("--experiment")) cfg.kind = costloss::parse_kind(experiment);
  if (cmd.count("--dataset")) cfg.dataset = costloss::parse_dataset(dataset);
  if (cmd.count("--loss")) cfg.variant = costloss::parse_variant(loss);
  if (cmd.count("--activation"))
    cfg.activation =
        activation == "tanh" ? costloss::Activation::kTanh : costloss::Activation::kRelu;

  if (cfg.dataset == costloss::DatasetSource::kBlobsHier && cfg.blobs.super_classes == 0)
    cfg.blobs.super_classes = 5;
  if (cfg.alpha_grid.empty()) cfg.alpha_grid = {0.0, 0.1, 0.5, 0.9, 0.95, 0.99};
  if (cfg.n_grid.empty()) {
    if (cfg.kind == costloss::ExperimentKind::kMasked) cfg.n_grid = {10, 20, 30, 40, 50};
    if (cfg.kind == costloss::ExperimentKind::kSmallSample) cfg.n_grid = {0, 10, 50};
  }
  if (cfg.out_dir.empty()) throw CLI::ValidationError("--out", "output directory is required");

  costloss::validate_experiment_config(cfg);
  const costloss::SweepOutcome outcome = costloss::run_sweep(cfg, /*print_progress=*/true);
  costloss::emit(cfg, outcome);

  int failed_runs = 0;
  for (const auto& run : outcome.runs)
    if (run.failed) ++failed_runs;
  std::cout << "sweep complete: " << outcome.runs.size() << " runs (" << failed_runs
            << " failed), " << costloss::cell_count(cfg) << " cells\n";
  std::cout << "wrote " << cfg.out_dir << "/aggregate.csv\n";

  bool required_failure = false;
  for (const auto& trend : outcome.trends) {
    if (!trend.applicable) {
      std::cout << "TREND SKIP " << trend.name << " (grid lacks the needed cells)\n";
      continue;
    }
    std::cout << "TREND " << (trend.pass ? "PASS" : "FAIL") << " " << trend.name << ": "
              << trend.detail << "\n";
    if (!trend.pass && cfg.trends_required) required_failure = true;
  }
  return required_failure ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cost-sensitive classification experiment harness"};
  app.require_subcommand(1);

  // ---- run ----
  auto* run = app.add_subcommand("run", "execute a seeded experiment sweep");
  ExperimentConfig cfg;
  std::string config_path, experiment = "masked", dataset = "blobs", loss = "bilinear",
              activation = "relu";
  run->add_option("--config", config_path, "JSON config file; flags override it");
  run->add_option("--experiment", experiment, "masked|hierarchical|small-sample");
  run->add_option("--dataset", dataset, "mnist|blobs|blobs-hier");
  run->add_option("--loss", loss, "ce|bilinear|log-bilinear");
  run->add_option("--alpha-grid", cfg.alpha_grid, "trade-off parameter grid");
  run->add_option("--n-grid", cfg.n_grid, "mask sizes (masked) or keep counts (small-sample)");
  run->add_option("--reps", cfg.repetitions, "repetitions per cell");
  run->add_option("--seed", cfg.base_seed, "base seed; derives every per-run seed");
  run->add_option("--epochs", cfg.train.epochs, "training epochs");
  run->add_option("--out", cfg.out_dir, "output directory");
  run->add_option("--mnist-dir", cfg.mnist_dir, "directory with the four MNIST IDX files");
  run->add_option("--masked-cost", cfg.masked_cost, "penalty at masked cells");
  run->add_option("--within-cost", cfg.within_cost, "penalty within the true super-class");
  run->add_option("--across-cost", cfg.across_cost, "penalty across super-classes");
  run->add_option("--small-classes", cfg.small_sample_classes,
                  "classes to down-sample (small-sample)");
  run->add_option("--threads", cfg.threads, "parallel jobs");
  run->add_option("--hidden", cfg.hidden_sizes, "hidden layer widths");
  run->add_option("--activation", activation, "relu|tanh");
  run->add_option("--batch-size", cfg.train.batch_size, "minibatch size");
  run->add_option("--lr", cfg.train.learning_rate, "learning rate");
  run->add_option("--momentum", cfg.train.momentum, "SGD momentum");
  run->add_option("--blob-k", cfg.blobs.k, "blob classes");
  run->add_option("--blob-d", cfg.blobs.d, "blob dimension");
  run->add_option("--blob-train", cfg.blobs.n_per_class, "train points per class");
  run->add_option("--blob-test", cfg.test_per_class, "test points per class");
  run->add_option("--blob-spread", cfg.blobs.center_spread, "center spread");
  run->add_option("--blob-sigma", cfg.blobs.within_sigma, "within-class sigma");
  run->add_option("--blob-super", cfg.blobs.super_classes, "super-classes (blobs-hier)");
  run->add_option("--blob-group-spread", cfg.blobs.group_spread,
                  "class-center spread around super-centers");
  run->add_flag("--require-trends", cfg.trends_required,
                "exit nonzero if a trend check fails");

  // ---- penalty utilities ----
  auto* penalty = app.add_subcommand("penalty", "build, export and validate penalty matrices");
  penalty->require_subcommand(1);

  auto* mask_cmd = penalty->add_subcommand("mask", "random error mask as a penalty CSV");
  int mask_k = 10, mask_n = 10;
  uint64_t mask_seed = 0;
  double mask_cost = 1.0;
  std::string mask_out;
  mask_cmd->add_option("--k", mask_k, "class count")->required();
  mask_cmd->add_option("--n", mask_n, "true off-diagonal cells")->required();
  mask_cmd->add_option("--seed", mask_seed, "mask seed");
  mask_cmd->add_option("--cost", mask_cost, "cost at masked cells");
  mask_cmd->add_option("--out", mask_out, "output CSV")->required();

  auto* hier_cmd = penalty->add_subcommand("hierarchical", "super-class penalty CSV");
  int hier_k = 0, hier_super = 0;
  double within = 1.0, across = 5.0;
  std::string map_path, hier_out;
  hier_cmd->add_option("--map", map_path, "super-class map file (fine<TAB>super lines)");
  hier_cmd->add_option("--k", hier_k, "class count (block map; with --super)");
  hier_cmd->add_option("--super", hier_super, "super-class count (block map)");
  hier_cmd->add_option("--within", within, "same-super-class cost");
  hier_cmd->add_option("--across", across, "cross-super-class cost");
  hier_cmd->add_option("--out", hier_out, "output CSV")->required();

  auto* validate_cmd = penalty->add_subcommand("validate", "check a penalty CSV");
  std::string validate_in;
  validate_cmd->add_option("--in", validate_in, "penalty CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return run_command(*run, cfg, config_path, experiment, dataset, loss, activation);

    if (mask_cmd->parsed()) {
      const auto mask = costloss::random_mask(mask_k, mask_n, mask_seed);
      costloss::save_penalty_csv(costloss::mask_to_penalty(mask, mask_cost), mask_out);
      std::cout << "wrote " << mask_out << " (" << mask_n << " masked cells)\n";
      return 0;
    }
    if (hier_cmd->parsed()) {
      costloss::SuperClassMap map =
          map_path.empty() ? costloss::SuperClassMap::blocks(hier_k, hier_super)
                           : costloss::load_super_class_map(map_path);
      costloss::save_penalty_csv(costloss::hierarchical_penalty(map, within, across), hier_out);
      std::cout << "wrote " << hier_out << " (k=" << map.k() << ", m=" << map.m << ")\n";
      return 0;
    }
    if (validate_cmd->parsed()) {
      const auto a = costloss::load_penalty_csv(validate_in);
      const auto violations = costloss::validate_penalty(a);
      if (violations.empty()) {
        std::cout << "ok: " << a.k << "x" << a.k << " penalty matrix\n";
        return 0;
      }
      for (const auto& v : violations)
        std::cout << "violation at (" << v.row << ", " << v.col << "): " << v.what << " ("
                  << v.value << ")\n";
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
