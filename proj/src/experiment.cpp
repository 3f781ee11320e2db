#include "costloss/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "costloss/loss.hpp"
#include "costloss/rng.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace costloss {

namespace {

// Shortest representation that round-trips the exact double.
std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

const char* kMnistTrainImages = "train-images-idx3-ubyte";
const char* kMnistTrainLabels = "train-labels-idx1-ubyte";
const char* kMnistTestImages = "t10k-images-idx3-ubyte";
const char* kMnistTestLabels = "t10k-labels-idx1-ubyte";

}  // namespace

std::string kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kMasked: return "masked";
    case ExperimentKind::kHierarchical: return "hierarchical";
    case ExperimentKind::kSmallSample: return "small-sample";
  }
  throw std::logic_error("kind_name: bad kind");
}

ExperimentKind parse_kind(const std::string& name) {
  if (name == "masked") return ExperimentKind::kMasked;
  if (name == "hierarchical") return ExperimentKind::kHierarchical;
  if (name == "small-sample") return ExperimentKind::kSmallSample;
  throw std::invalid_argument("unknown experiment kind '" + name +
                              "' (expected masked|hierarchical|small-sample)");
}

std::string dataset_name(DatasetSource source) {
  switch (source) {
    case DatasetSource::kBlobs: return "blobs";
    case DatasetSource::kBlobsHier: return "blobs-hier";
    case DatasetSource::kMnist: return "mnist";
  }
  throw std::logic_error("dataset_name: bad source");
}

DatasetSource parse_dataset(const std::string& name) {
  if (name == "blobs") return DatasetSource::kBlobs;
  if (name == "blobs-hier") return DatasetSource::kBlobsHier;
  if (name == "mnist") return DatasetSource::kMnist;
  throw std::invalid_argument("unknown dataset '" + name + "' (expected mnist|blobs|blobs-hier)");
}

std::string variant_name(LossVariant variant) {
  switch (variant) {
    case LossVariant::kCrossEntropy: return "ce";
    case LossVariant::kCePlusBilinear: return "bilinear";
    case LossVariant::kCePlusLogBilinear: return "log-bilinear";
  }
  throw std::logic_error("variant_name: bad variant");
}

LossVariant parse_variant(const std::string& name) {
  if (name == "ce") return LossVariant::kCrossEntropy;
  if (name == "bilinear") return LossVariant::kCePlusBilinear;
  if (name == "log-bilinear") return LossVariant::kCePlusLogBilinear;
  throw std::invalid_argument("unknown loss '" + name + "' (expected ce|bilinear|log-bilinear)");
}

uint64_t derive_seed(uint64_t base_seed, uint64_t stream, uint64_t a, uint64_t b) {
  return base_seed ^ splitmix64(splitmix64(splitmix64(stream) + a) + b);
}

void validate_experiment_config(const ExperimentConfig& cfg) {
  if (cfg.alpha_grid.empty()) throw std::invalid_argument("config: alpha grid is empty");
  for (double a : cfg.alpha_grid)
    if (!(a >= 0.0 && a <= 1.0))
      throw std::invalid_argument("config: alpha " + std::to_string(a) + " outside [0, 1]");
  if (cfg.kind != ExperimentKind::kHierarchical && cfg.n_grid.empty())
    throw std::invalid_argument("config: n grid is empty");
  if (cfg.repetitions < 1) throw std::invalid_argument("config: repetitions must be >= 1");
  if (cfg.threads < 1) throw std::invalid_argument("config: threads must be >= 1");
  if (!(cfg.masked_cost > 0.0)) throw std::invalid_argument("config: masked cost must be > 0");
  if (cfg.within_cost < 0.0 || cfg.within_cost > cfg.across_cost)
    throw std::invalid_argument("config: need 0 <= within cost <= across cost");
  for (int h : cfg.hidden_sizes)
    if (h < 1) throw std::invalid_argument("config: hidden sizes must be >= 1");

  const bool needs_hierarchy =
      cfg.kind == ExperimentKind::kHierarchical || cfg.kind == ExperimentKind::kSmallSample;
  if (needs_hierarchy && cfg.dataset == DatasetSource::kBlobs)
    throw std::invalid_argument("config: " + kind_name(cfg.kind) +
                                " experiments need a dataset with super-classes "
                                "(blobs-hier or mnist)");
  if (cfg.dataset == DatasetSource::kBlobsHier && cfg.blobs.super_classes < 1)
    throw std::invalid_argument("config: blobs-hier needs super_classes >= 1");
  if (cfg.dataset == DatasetSource::kMnist && cfg.mnist_dir.empty())
    throw std::invalid_argument("config: dataset mnist needs --mnist-dir");
  if (cfg.kind == ExperimentKind::kSmallSample && cfg.small_sample_classes < 1)
    throw std::invalid_argument("config: small_sample_classes must be >= 1");
  if (cfg.kind == ExperimentKind::kMasked) {
    for (int n : cfg.n_grid)
      if (n < 0) throw std::invalid_argument("config: mask sizes must be >= 0");
  }
  if (cfg.kind == ExperimentKind::kSmallSample) {
    for (int n : cfg.n_grid)
      if (n < 0) throw std::invalid_argument("config: keep counts must be >= 0");
  }
}

int cell_count(const ExperimentConfig& cfg) {
  const int alphas = static_cast<int>(cfg.alpha_grid.size());
  if (cfg.kind == ExperimentKind::kHierarchical) return alphas;
  return alphas * static_cast<int>(cfg.n_grid.size());
}

namespace {

struct CellParams {
  double alpha = 0.0;
  int n = -1;       // masked/small-sample grids only
  int n_index = 0;  // index into n_grid; 0 for hierarchical
};

CellParams cell_params(const ExperimentConfig& cfg, int cell_index) {
  const int alphas = static_cast<int>(cfg.alpha_grid.size());
  CellParams params;
  if (cfg.kind == ExperimentKind::kHierarchical) {
    params.alpha = cfg.alpha_grid[cell_index];
  } else {
    params.n_index = cell_index / alphas;
    params.alpha = cfg.alpha_grid[cell_index % alphas];
    params.n = cfg.n_grid[params.n_index];
  }
  return params;
}

MlpSpec model_spec(const ExperimentConfig& cfg, const LabeledDataset& train, uint64_t init_seed) {
  MlpSpec spec;
  spec.layer_sizes.push_back(train.d);
  for (int h : cfg.hidden_sizes) spec.layer_sizes.push_back(h);
  spec.layer_sizes.push_back(train.k);
  spec.activation = cfg.activation;
  spec.init_seed = init_seed;
  return spec;
}

// Per-class head/tail slicing; blob points are iid so this is a valid split
// with exact per-class counts.
void split_blobs_per_class(const LabeledDataset& all, int train_per_class, LabeledDataset& train,
                           LabeledDataset& test) {
  train.k = test.k = all.k;
  train.d = test.d = all.d;
  train.super_map = test.super_map = all.super_map;
  std::vector<int> seen(all.k, 0);
  for (int i = 0; i < all.size(); ++i) {
    LabeledDataset& dst = seen[all.labels[i]]++ < train_per_class ? train : test;
    const auto r = all.row(i);
    dst.features.insert(dst.features.end(), r.begin(), r.end());
    dst.labels.push_back(all.labels[i]);
  }
}

// Baseline within-super-class error fraction per class; classes with no
// errors rank last.
std::vector<int> select_small_sample_classes(const ExperimentConfig& cfg,
                                             const LabeledDataset& train_data,
                                             const LabeledDataset& test_data) {
  const SuperClassMap& map = *train_data.super_map;
  MlpSpec spec = model_spec(cfg, train_data, derive_seed(cfg.base_seed, kStreamBaseline, 0, 0));
  ModelState state = init_model(spec);
  TrainConfig tc = cfg.train;
  tc.shuffle_seed = derive_seed(cfg.base_seed, kStreamBaseline, 1, 0);
  LossConfig baseline_loss;  // plain CE
  train(state, train_data, baseline_loss, tc);
  const ConfusionMatrix cm =
      confusion(predict_all(state, test_data), test_data.labels, test_data.k);

  std::vector<double> typicality(train_data.k, -1.0);
  for (int c = 0; c < train_data.k; ++c) {
    int64_t errors = 0, within = 0;
    for (int j = 0; j < train_data.k; ++j) {
      if (j == c) continue;
      errors += cm.at(c, j);
      if (map.super_of(c) == map.super_of(j)) within += cm.at(c, j);
    }
    if (errors > 0) typicality[c] = static_cast<double>(within) / static_cast<double>(errors);
  }

  // Most typical class per super-class, then the top super-classes.
  std::vector<int> candidates;
  for (int s = 0; s < map.m; ++s) {
    int best = -1;
    for (int c = 0; c < train_data.k; ++c) {
      if (map.super_of(c) != s) continue;
      if (best == -1 || typicality[c] > typicality[best]) best = c;
    }
    candidates.push_back(best);
  }
  std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    if (typicality[a] != typicality[b]) return typicality[a] > typicality[b];
    return a < b;
  });
  const int want = std::min<int>(cfg.small_sample_classes, static_cast<int>(candidates.size()));
  std::vector<int> selected(candidates.begin(), candidates.begin() + want);
  std::sort(selected.begin(), selected.end());
  return selected;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& cfg) {
  validate_experiment_config(cfg);
  PreparedData out;
  if (cfg.dataset == DatasetSource::kMnist) {
    const fs::path dir(cfg.mnist_dir);
    LabeledDataset full_train =
        load_mnist_idx((dir / kMnistTrainImages).string(), (dir / kMnistTrainLabels).string());
    // 55k train / 5k validation split; the validation part is unused (no
    // early stopping) but the partition is applied so train size matches
    // the protocol.
    const double fractions[] = {55000.0 / 60000.0, 5000.0 / 60000.0};
    auto parts = split(full_train, fractions, derive_seed(cfg.base_seed, kStreamDataset, 1, 0));
    out.train = std::move(parts[0]);
    out.test = load_mnist_idx((dir / kMnistTestImages).string(), (dir / kMnistTestLabels).string());
    if (cfg.kind != ExperimentKind::kMasked) {
      // Stand-in grouping for digit data: {0..4}, {5..9}. Not a real
      // visual hierarchy; recorded in run metadata.
      out.train.super_map = SuperClassMap::blocks(out.train.k, 2);
      out.test.super_map = out.train.super_map;
    }
  } else {
    BlobSpec spec = cfg.blobs;
    if (cfg.dataset == DatasetSource::kBlobs) spec.super_classes = 0;
    spec.seed = derive_seed(cfg.base_seed, kStreamDataset, 0, 0);
    const int train_per_class = spec.n_per_class;
    spec.n_per_class += cfg.test_per_class;
    const LabeledDataset all = make_blobs(spec);
    split_blobs_per_class(all, train_per_class, out.train, out.test);
  }

  if (cfg.kind == ExperimentKind::kSmallSample)
    out.small_classes = select_small_sample_classes(cfg, out.train, out.test);
  return out;
}

RunResult run_one(const ExperimentConfig& cfg, const PreparedData& data, int cell_index,
                  int rep_index) {
  const auto started = std::chrono::steady_clock::now();
  const CellParams cell = cell_params(cfg, cell_index);

  RunResult result;
  result.cell_index = cell_index;
  result.rep_index = rep_index;
  result.alpha = cell.alpha;
  result.n = cell.n;
  result.dataset_seed = derive_seed(cfg.base_seed, kStreamDataset, 0, 0);
  result.init_seed = derive_seed(cfg.base_seed, kStreamInit, cell_index, rep_index);
  result.shuffle_seed = derive_seed(cfg.base_seed, kStreamShuffle, cell_index, rep_index);
  result.small_classes = data.small_classes;

  // Masks are resampled per repetition but shared across the alpha grid
  // (the seed depends on the mask-size index, not the cell), so runs that
  // differ only in alpha see the same masked zone.
  LossConfig loss;
  loss.variant = cfg.variant;
  loss.alpha = cell.alpha;
  if (cfg.kind == ExperimentKind::kMasked) {
    result.mask_seed = derive_seed(cfg.base_seed, kStreamMask, cell.n_index, rep_index);
    result.mask = random_mask(data.train.k, cell.n, result.mask_seed);
    loss.penalty = mask_to_penalty(*result.mask, cfg.masked_cost);
  } else {
    loss.penalty =
        hierarchical_penalty(*data.train.super_map, cfg.within_cost, cfg.across_cost);
  }

  LabeledDataset train_data;
  const LabeledDataset* train_ptr = &data.train;
  if (cfg.kind == ExperimentKind::kSmallSample) {
    train_data = data.train;
    for (int cls : data.small_classes) {
      const uint64_t seed = derive_seed(cfg.base_seed, kStreamDownsample,
                                        static_cast<uint64_t>(cell.n_index) * 65536 + cls,
                                        rep_index);
      train_data = downsample_class(train_data, cls, cell.n, /*duplicate_back=*/true, seed);
    }
    train_ptr = &train_data;
  }

  MlpSpec spec = model_spec(cfg, *train_ptr, result.init_seed);
  ModelState state = init_model(spec);
  TrainConfig tc = cfg.train;
  tc.shuffle_seed = result.shuffle_seed;

  try {
    const TrainTrace trace = train(state, *train_ptr, loss, tc);
    result.epoch_loss = trace.epoch_mean_loss;
  } catch (const TrainingDivergence& diverged) {
    result.failed = true;
    result.failure = diverged.what();
    result.duration_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - started)
                             .count();
    return result;
  }

  result.train_cm = confusion(predict_all(state, *train_ptr), train_ptr->labels, train_ptr->k);
  result.test_cm = confusion(predict_all(state, data.test), data.test.labels, data.test.k);
  result.total_error_train = total_error(result.train_cm);
  result.total_error_test = total_error(result.test_cm);

  if (cfg.kind == ExperimentKind::kMasked) {
    result.masked_count_train = masked_error_count(result.train_cm, *result.mask);
    result.masked_count_test = masked_error_count(result.test_cm, *result.mask);
  } else {
    const SuperClassMap& map = *data.test.super_map;
    result.coarse_err = coarse_error(result.test_cm, map);
    result.within_fraction = within_superclass_fraction(result.test_cm, map);
    if (cfg.kind == ExperimentKind::kSmallSample) {
      result.model_accuracy = 1.0 - result.total_error_test;
      int64_t small_total = 0, small_correct = 0, small_within = 0;
      for (int cls : data.small_classes)
        for (int j = 0; j < result.test_cm.k; ++j) {
          const int64_t count = result.test_cm.at(cls, j);
          small_total += count;
          if (j == cls) small_correct += count;
          if (map.super_of(cls) == map.super_of(j)) small_within += count;
        }
      if (small_total > 0) {
        result.small_accuracy = static_cast<double>(small_correct) / small_total;
        result.small_super_accuracy = static_cast<double>(small_within) / small_total;
      }
    }
  }

  result.duration_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
          .count();
  return result;
}

namespace {

struct MetricExtractor {
  std::string name;
  std::optional<double> (*get)(const RunResult&);
};

std::vector<MetricExtractor> metrics_for(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kMasked:
      return {
          {"masked_error_count",
           [](const RunResult& r) -> std::optional<double> {
             if (!r.masked_count_test) return std::nullopt;
             return static_cast<double>(*r.masked_count_test);
           }},
          {"total_error",
           [](const RunResult& r) -> std::optional<double> { return r.total_error_test; }},
      };
    case ExperimentKind::kHierarchical:
      return {
          {"total_error",
           [](const RunResult& r) -> std::optional<double> { return r.total_error_test; }},
          {"coarse_error", [](const RunResult& r) { return r.coarse_err; }},
          {"within_superclass_fraction", [](const RunResult& r) { return r.within_fraction; }},
      };
    case ExperimentKind::kSmallSample:
      return {
          {"model_accuracy", [](const RunResult& r) { return r.model_accuracy; }},
          {"small_sample_accuracy", [](const RunResult& r) { return r.small_accuracy; }},
          {"small_sample_superclass_accuracy",
           [](const RunResult& r) { return r.small_super_accuracy; }},
      };
  }
  throw std::logic_error("metrics_for: bad kind");
}

SweepTable aggregate(const ExperimentConfig& cfg, const std::vector<RunResult>& runs) {
  SweepTable table;
  const auto metrics = metrics_for(cfg.kind);
  const int cells = cell_count(cfg);
  for (int cell = 0; cell < cells; ++cell) {
    const CellParams params = cell_params(cfg, cell);
    for (const auto& metric : metrics) {
      std::vector<double> samples;
      for (const auto& run : runs) {
        if (run.cell_index != cell || run.failed) continue;
        if (const auto value = metric.get(run)) samples.push_back(*value);
      }
      SweepRow row;
      row.alpha = params.alpha;
      row.n = params.n;
      row.metric = metric.name;
      row.reps = static_cast<int>(samples.size());
      if (samples.size() >= 2) {
        const MeanCi ci = ci95(samples);
        row.mean = ci.mean;
        row.ci95_half = ci.half_width;
      } else if (samples.size() == 1) {
        row.mean = samples[0];
        row.ci95_half = std::numeric_limits<double>::quiet_NaN();
      } else {
        row.mean = std::numeric_limits<double>::quiet_NaN();
        row.ci95_half = std::numeric_limits<double>::quiet_NaN();
      }
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

}  // namespace

const SweepRow* SweepTable::find(double alpha, int n, const std::string& metric) const {
  for (const auto& row : rows)
    if (row.alpha == alpha && row.n == n && row.metric == metric) return &row;
  return nullptr;
}

std::vector<TrendResult> evaluate_trends(const ExperimentConfig& cfg, const SweepTable& table) {
  std::vector<TrendResult> out;
  std::vector<double> alphas = cfg.alpha_grid;
  std::sort(alphas.begin(), alphas.end());
  const bool has_zero = !alphas.empty() && alphas.front() == 0.0;
  const double alpha_high = alphas.empty() ? 0.0 : alphas.back();

  if (cfg.kind == ExperimentKind::kMasked) {
    TrendResult reduction{"masked_reduction", false, true, ""};
    TrendResult error_increase{"total_error_increase", false, true, ""};
    if (has_zero && alphas.size() >= 2) {
      reduction.applicable = true;
      for (int n : cfg.n_grid) {
        const SweepRow* base = table.find(0.0, n, "masked_error_count");
        const SweepRow* high = table.find(alpha_high, n, "masked_error_count");
        if (!base || !high || base->reps == 0 || high->reps == 0) {
          reduction.applicable = false;
          break;
        }
        const bool ok = high->mean <= cfg.trends.masked_max_ratio * base->mean;
        if (!ok) reduction.pass = false;
        reduction.detail += "n=" + std::to_string(n) + ": " + format_double(high->mean) + " vs " +
                            format_double(cfg.trends.masked_max_ratio) + "*" +
                            format_double(base->mean) + (ok ? " ok; " : " FAIL; ");
      }
      const double alpha_mid = cfg.trends.masked_alpha_mid;
      if (std::find(alphas.begin(), alphas.end(), alpha_mid) != alphas.end()) {
        error_increase.applicable = true;
        for (int n : cfg.n_grid) {
          const SweepRow* base = table.find(0.0, n, "total_error");
          const SweepRow* mid = table.find(alpha_mid, n, "total_error");
          if (!base || !mid || base->reps == 0 || mid->reps == 0) {
            error_increase.applicable = false;
            break;
          }
          const double increase_pp = (mid->mean - base->mean) * 100.0;
          const bool ok = increase_pp <= cfg.trends.masked_max_error_increase_pp;
          if (!ok) error_increase.pass = false;
          error_increase.detail += "n=" + std::to_string(n) + ": +" +
                                   format_double(increase_pp) + "pp" + (ok ? " ok; " : " FAIL; ");
        }
      }
    }
    out.push_back(std::move(reduction));
    out.push_back(std::move(error_increase));
  } else if (cfg.kind == ExperimentKind::kHierarchical) {
    TrendResult increasing{"within_fraction_increasing", false, true, ""};
    if (alphas.size() >= 2) {
      increasing.applicable = true;
      double prev = -1.0;
      for (double alpha : alphas) {
        const SweepRow* row = table.find(alpha, -1, "within_superclass_fraction");
        if (!row || row->reps == 0) {
          increasing.applicable = false;
          break;
        }
        if (row->mean <= prev) increasing.pass = false;
        increasing.detail += "alpha=" + format_double(alpha) + ": " + format_double(row->mean) +
                             "; ";
        prev = row->mean;
      }
    }
    out.push_back(std::move(increasing));

    TrendResult contained{"coarse_error_contained", false, true, ""};
    if (has_zero && alphas.size() >= 2) {
      const SweepRow* base = table.find(0.0, -1, "coarse_error");
      const SweepRow* high = table.find(alpha_high, -1, "coarse_error");
      if (base && high && base->reps > 0 && high->reps > 0) {
        contained.applicable = true;
        contained.pass = high->mean <= base->mean;
        contained.detail = "alpha=" + format_double(alpha_high) + ": " +
                           format_double(high->mean) + " vs baseline " +
                           format_double(base->mean);
      }
    }
    out.push_back(std::move(contained));
  } else {
    TrendResult floor{"absent_class_accuracy_zero", false, true, ""};
    TrendResult above{"absent_class_super_above_chance", false, true, ""};
    if (std::find(cfg.n_grid.begin(), cfg.n_grid.end(), 0) != cfg.n_grid.end()) {
      floor.applicable = true;
      above.applicable = true;
      const int k = cfg.blobs.k;
      const int m = std::max(1, cfg.blobs.super_classes);
      const double chance = k > 1 ? static_cast<double>(k / m - 1) / (k - 1) : 0.0;
      for (double alpha : alphas) {
        const SweepRow* acc = table.find(alpha, 0, "small_sample_accuracy");
        const SweepRow* super_acc = table.find(alpha, 0, "small_sample_superclass_accuracy");
        if (!acc || !super_acc || acc->reps == 0 || super_acc->reps == 0) {
          floor.applicable = above.applicable = false;
          break;
        }
        if (acc->mean != 0.0) floor.pass = false;
        floor.detail += "alpha=" + format_double(alpha) + ": " + format_double(acc->mean) + "; ";
        if (!(super_acc->mean > chance)) above.pass = false;
        above.detail += "alpha=" + format_double(alpha) + ": " + format_double(super_acc->mean) +
                        " vs chance " + format_double(chance) + "; ";
      }
    }
    out.push_back(std::move(floor));
    out.push_back(std::move(above));
  }
  return out;
}

SweepOutcome run_sweep(const ExperimentConfig& cfg, bool print_progress) {
  validate_experiment_config(cfg);
  const PreparedData data = prepare_data(cfg);

  struct Job {
    int cell;
    int rep;
  };
  std::vector<Job> jobs;
  const int cells = cell_count(cfg);
  for (int cell = 0; cell < cells; ++cell)
    for (int rep = 0; rep < cfg.repetitions; ++rep) jobs.push_back({cell, rep});

  SweepOutcome outcome;
  outcome.runs.resize(jobs.size());
  std::atomic<size_t> cursor{0};
  std::atomic<size_t> done{0};
  std::mutex print_mutex;
  auto worker = [&] {
    for (;;) {
      const size_t i = cursor.fetch_add(1);
      if (i >= jobs.size()) break;
      outcome.runs[i] = run_one(cfg, data, jobs[i].cell, jobs[i].rep);
      const size_t finished = done.fetch_add(1) + 1;
      if (print_progress) {
        std::lock_guard<std::mutex> lock(print_mutex);
        std::cerr << "run " << finished << "/" << jobs.size() << " (cell " << jobs[i].cell
                  << ", rep " << jobs[i].rep << ")"
                  << (outcome.runs[i].failed ? " FAILED" : "") << "\n";
      }
    }
  };

  const int threads = std::min<int>(cfg.threads, static_cast<int>(jobs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  outcome.table = aggregate(cfg, outcome.runs);
  outcome.trends = evaluate_trends(cfg, outcome.table);
  return outcome;
}

std::string aggregate_csv(const ExperimentConfig& cfg, const SweepTable& table) {
  std::string csv = "kind,alpha,n,metric,mean,ci95_half,reps\n";
  const std::string kind = kind_name(cfg.kind);
  for (const auto& row : table.rows) {
    csv += kind;
    csv += ',';
    csv += format_double(row.alpha);
    csv += ',';
    if (row.n >= 0) csv += std::to_string(row.n);
    csv += ',';
    csv += row.metric;
    csv += ',';
    csv += format_double(row.mean);
    csv += ',';
    csv += format_double(row.ci95_half);
    csv += ',';
    csv += std::to_string(row.reps);
    csv += '\n';
  }
  return csv;
}

namespace {

ordered_json config_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["experiment"] = kind_name(cfg.kind);
  j["dataset"] = dataset_name(cfg.dataset);
  j["loss"] = variant_name(cfg.variant);
  j["alpha_grid"] = cfg.alpha_grid;
  j["n_grid"] = cfg.n_grid;
  j["masked_cost"] = cfg.masked_cost;
  j["within_cost"] = cfg.within_cost;
  j["across_cost"] = cfg.across_cost;
  j["small_sample_classes"] = cfg.small_sample_classes;
  j["repetitions"] = cfg.repetitions;
  j["seed"] = cfg.base_seed;
  j["hidden"] = cfg.hidden_sizes;
  j["activation"] = cfg.activation == Activation::kRelu ? "relu" : "tanh";
  j["epochs"] = cfg.train.epochs;
  j["batch_size"] = cfg.train.batch_size;
  j["learning_rate"] = cfg.train.learning_rate;
  j["momentum"] = cfg.train.momentum;
  j["test_per_class"] = cfg.test_per_class;
  if (cfg.dataset != DatasetSource::kMnist) {
    j["blobs"] = {{"k", cfg.blobs.k},
                  {"d", cfg.blobs.d},
                  {"n_per_class", cfg.blobs.n_per_class},
                  {"center_spread", cfg.blobs.center_spread},
                  {"within_sigma", cfg.blobs.within_sigma},
                  {"super_classes", cfg.blobs.super_classes},
                  {"group_spread", cfg.blobs.group_spread}};
  } else {
    j["mnist_dir"] = cfg.mnist_dir;
  }
  return j;
}

ordered_json confusion_json(const ConfusionMatrix& cm) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < cm.k; ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < cm.k; ++j) row.push_back(cm.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json run_json(const ExperimentConfig& cfg, const RunResult& run) {
  ordered_json j;
  j["schema_version"] = 1;
  j["config"] = config_json(cfg);
  j["cell_index"] = run.cell_index;
  j["rep_index"] = run.rep_index;
  j["alpha"] = run.alpha;
  if (run.n >= 0) j["n"] = run.n;
  j["seeds"] = {{"dataset", run.dataset_seed},
                {"mask", run.mask_seed},
                {"init", run.init_seed},
                {"shuffle", run.shuffle_seed}};
  j["failed"] = run.failed;
  if (run.failed) {
    j["failure"] = run.failure;
    j["duration_ms"] = run.duration_ms;
    return j;
  }
  if (run.mask) {
    ordered_json cells = ordered_json::array();
    for (const auto& [r, c] : run.mask->true_cells()) cells.push_back({r, c});
    j["mask_cells"] = std::move(cells);
  }
  ordered_json metrics;
  metrics["total_error_train"] = run.total_error_train;
  metrics["total_error_test"] = run.total_error_test;
  if (run.masked_count_train) metrics["masked_error_count_train"] = *run.masked_count_train;
  if (run.masked_count_test) metrics["masked_error_count_test"] = *run.masked_count_test;
  if (run.coarse_err) metrics["coarse_error"] = *run.coarse_err;
  if (run.within_fraction) metrics["within_superclass_fraction"] = *run.within_fraction;
  else if (cfg.kind != ExperimentKind::kMasked)
    metrics["within_superclass_fraction"] = "undefined";
  if (run.model_accuracy) metrics["model_accuracy"] = *run.model_accuracy;
  if (run.small_accuracy) metrics["small_sample_accuracy"] = *run.small_accuracy;
  if (run.small_super_accuracy)
    metrics["small_sample_superclass_accuracy"] = *run.small_super_accuracy;
  j["metrics"] = std::move(metrics);
  if (!run.small_classes.empty()) j["small_sample_classes"] = run.small_classes;
  j["epoch_loss"] = run.epoch_loss;
  j["train_confusion"] = confusion_json(run.train_cm);
  j["test_confusion"] = confusion_json(run.test_cm);
  j["duration_ms"] = run.duration_ms;
  return j;
}

}  // namespace

void emit(const ExperimentConfig& cfg, const SweepOutcome& outcome) {
  if (outcome.runs.empty()) throw std::invalid_argument("emit: empty sweep, nothing to write");
  if (cfg.out_dir.empty()) throw std::invalid_argument("emit: no output directory configured");

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir / "runs");
  fs::create_directories(out_dir / "confusions");

  {
    std::ofstream out(out_dir / "aggregate.csv", std::ios::binary);
    if (!out) throw std::runtime_error("emit: cannot write " + (out_dir / "aggregate.csv").string());
    out << aggregate_csv(cfg, outcome.table);
  }

  for (const auto& run : outcome.runs) {
    const std::string stem =
        "cell" + std::to_string(run.cell_index) + "_rep" + std::to_string(run.rep_index);
    {
      std::ofstream out(out_dir / "runs" / ("run_" + std::to_string(run.cell_index) + "_" +
                                            std::to_string(run.rep_index) + ".json"),
                        std::ios::binary);
      out << run_json(cfg, run).dump(2) << "\n";
    }
    if (!run.failed) {
      save_confusion_csv(run.train_cm, (out_dir / "confusions" / (stem + "_train.csv")).string());
      save_confusion_csv(run.test_cm, (out_dir / "confusions" / (stem + "_test.csv")).string());
    }
  }
}

}  // namespace costloss
