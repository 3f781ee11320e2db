// experiment.hpp
//
// Sweep harness: seeded runs over an (alpha, n) grid or hierarchical
// configurations, repetition, aggregation into mean +/- 95% CI tables,
// and byte-stable result emission. Cells and repetitions are independent
// jobs; a configured number execute in parallel and the output is
// identical regardless of thread count or execution order.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "costloss/data.hpp"
#include "costloss/metrics.hpp"
#include "costloss/model.hpp"
#include "costloss/penalty.hpp"

namespace costloss {

enum class ExperimentKind { kMasked, kHierarchical, kSmallSample };
enum class DatasetSource { kBlobs, kBlobsHier, kMnist };

std::string kind_name(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& name);
std::string dataset_name(DatasetSource source);
DatasetSource parse_dataset(const std::string& name);
std::string variant_name(LossVariant variant);
LossVariant parse_variant(const std::string& name);

struct TrendThresholds {
  double masked_max_ratio = 0.5;             // high-alpha masked count vs alpha=0 mean
  double masked_alpha_mid = 0.5;             // alpha probed for the total-error check
  double masked_max_error_increase_pp = 2.0; // allowed total-error increase, percentage points
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kMasked;
  DatasetSource dataset = DatasetSource::kBlobs;
  std::string mnist_dir;

  BlobSpec blobs;           // seed is derived from base_seed, not taken from here
  int test_per_class = 200; // blob datasets: held-out points per class

  std::vector<int> hidden_sizes{256, 128};
  Activation activation = Activation::kRelu;
  TrainConfig train;        // shuffle_seed is derived per run

  LossVariant variant = LossVariant::kCePlusBilinear;
  std::vector<double> alpha_grid;
  std::vector<int> n_grid;  // masked: mask sizes; small-sample: per-class keep counts
  double masked_cost = 1.0;
  double within_cost = 1.0;
  double across_cost = 5.0;
  int small_sample_classes = 2;

  int repetitions = 10;
  uint64_t base_seed = 1;
  std::string out_dir;
  int threads = 1;

  bool trends_required = false;
  TrendThresholds trends;
};

void validate_experiment_config(const ExperimentConfig& cfg);

// Everything a run needs to re-derive its reported metrics.
struct RunResult {
  bool failed = false;
  std::string failure;

  int cell_index = 0;
  int rep_index = 0;
  double alpha = 0.0;
  int n = -1;  // mask size (masked) or keep count (small-sample); -1 otherwise

  uint64_t dataset_seed = 0;
  uint64_t mask_seed = 0;
  uint64_t init_seed = 0;
  uint64_t shuffle_seed = 0;

  std::optional<ErrorMask> mask;
  ConfusionMatrix train_cm, test_cm;

  double total_error_train = 0.0;
  double total_error_test = 0.0;
  std::optional<int64_t> masked_count_train, masked_count_test;
  std::optional<double> coarse_err, within_fraction;
  std::optional<double> model_accuracy, small_accuracy, small_super_accuracy;
  std::vector<int> small_classes;

  std::vector<double> epoch_loss;
  double duration_ms = 0.0;
};

struct SweepRow {
  double alpha = 0.0;
  int n = -1;
  std::string metric;
  double mean = 0.0;
  double ci95_half = 0.0;  // NaN when fewer than 2 samples
  int reps = 0;            // samples aggregated (successful runs with the metric defined)
};

struct SweepTable {
  std::vector<SweepRow> rows;
  const SweepRow* find(double alpha, int n, const std::string& metric) const;
};

struct TrendResult {
  std::string name;
  bool applicable = false;  // the grid contains the cells the check needs
  bool pass = false;
  std::string detail;
};

struct SweepOutcome {
  SweepTable table;
  std::vector<RunResult> runs;
  std::vector<TrendResult> trends;
};

// Train/test data plus, for small-sample sweeps, the classes selected for
// down-sampling (one candidate per super-class ranked by baseline
// within-super-class error fraction, top small_sample_classes kept).
struct PreparedData {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<int> small_classes;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

// One (cell, repetition) job. Deterministic for fixed config and indices;
// training divergence is returned as a failed result, not thrown.
RunResult run_one(const ExperimentConfig& cfg, const PreparedData& data, int cell_index,
                  int rep_index);

int cell_count(const ExperimentConfig& cfg);

// Executes repetitions x cells, aggregates, evaluates trend checks.
SweepOutcome run_sweep(const ExperimentConfig& cfg, bool print_progress = false);

std::vector<TrendResult> evaluate_trends(const ExperimentConfig& cfg, const SweepTable& table);

// aggregate.csv content; stable column order, shortest-round-trip doubles.
std::string aggregate_csv(const ExperimentConfig& cfg, const SweepTable& table);

// Writes aggregate.csv, runs/run_<cell>_<rep>.json and
// confusions/cell<cell>_rep<rep>_{train,test}.csv under cfg.out_dir.
// Rejects an empty outcome without creating files.
void emit(const ExperimentConfig& cfg, const SweepOutcome& outcome);

// Seed streams, exposed for tests: every per-run seed is
// base_seed ^ mix(stream, a, b) so jobs are order-independent.
uint64_t derive_seed(uint64_t base_seed, uint64_t stream, uint64_t a, uint64_t b);
inline constexpr uint64_t kStreamDataset = 1;
inline constexpr uint64_t kStreamMask = 2;
inline constexpr uint64_t kStreamInit = 3;
inline constexpr uint64_t kStreamShuffle = 4;
inline constexpr uint64_t kStreamDownsample = 5;
inline constexpr uint64_t kStreamBaseline = 6;

}  // namespace costloss
