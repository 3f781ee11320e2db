// model.hpp
//
// Small fully-connected feed-forward classifier trained by minibatch SGD
// with momentum against any LossConfig. Deterministic: (init_seed,
// shuffle_seed, data) fully determine the training trajectory. A
// ModelState is owned by exactly one training run at a time; evaluation of
// an immutable state is safe from any thread.

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "costloss/data.hpp"
#include "costloss/loss.hpp"

namespace costloss {

enum class Activation { kRelu, kTanh };

// Per-layer weight init: uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
enum class InitScheme { kUniformFanAvg };

struct MlpSpec {
  std::vector<int> layer_sizes;  // input width, hidden..., class count
  Activation activation = Activation::kRelu;
  uint64_t init_seed = 0;
  InitScheme init_scheme = InitScheme::kUniformFanAvg;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  uint64_t shuffle_seed = 0;
};

struct ModelState {
  std::vector<int> sizes;
  Activation activation = Activation::kRelu;
  std::vector<std::vector<double>> weights;  // per layer, out x in row-major
  std::vector<std::vector<double>> biases;   // per layer, out
  uint64_t step = 0;

  int input_width() const { return sizes.front(); }
  int output_width() const { return sizes.back(); }
};

// Thrown when parameters or activations go non-finite during training.
struct TrainingDivergence : std::runtime_error {
  int epoch;
  uint64_t step;
  TrainingDivergence(int epoch, uint64_t step)
      : std::runtime_error("training diverged: non-finite parameters at epoch " +
                           std::to_string(epoch) + ", step " + std::to_string(step)),
        epoch(epoch),
        step(step) {}
};

ModelState init_model(const MlpSpec& spec);

// Logits for a single example; x must match the input width.
std::vector<double> forward(const ModelState& state, std::span<const double> x);

// argmax of the logits; ties go to the lowest index.
int predict(const ModelState& state, std::span<const double> x);

std::vector<int> predict_all(const ModelState& state, const LabeledDataset& data);

struct TrainTrace {
  std::vector<double> epoch_mean_loss;
};

// Minibatch SGD with momentum: v = mu*v + g, w -= lr*v, g the batch-mean
// gradient. Throws TrainingDivergence if parameters go non-finite.
TrainTrace train(ModelState& state, const LabeledDataset& data, const LossConfig& loss,
                 const TrainConfig& cfg);

// Checkpoint: "MLPC" magic, little-endian u32 version / activation id /
// layer count, u32 layer sizes, u64 step counter, then per layer the
// row-major double weights followed by the biases. Exact layout in the
// README.
void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace costloss
