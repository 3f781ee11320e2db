#include "costloss/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "costloss/rng.hpp"

namespace costloss {

namespace {

constexpr char kCheckpointMagic[4] = {'M', 'L', 'P', 'C'};
constexpr uint32_t kCheckpointVersion = 1;

double activate(Activation act, double z) {
  return act == Activation::kRelu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative in terms of pre-activation z and activation a.
double activate_prime(Activation act, double z, double a) {
  return act == Activation::kRelu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - a * a;
}

void check_input_width(const ModelState& state, size_t width) {
  if (static_cast<int>(width) != state.input_width())
    throw std::invalid_argument("forward: input width " + std::to_string(width) +
                                " != model input width " + std::to_string(state.input_width()));
}

// Affine z = W x + b for one layer.
void affine(const std::vector<double>& w, const std::vector<double>& b,
            std::span<const double> x, std::vector<double>& z) {
  const size_t out = b.size();
  const size_t in = x.size();
  z.resize(out);
  for (size_t o = 0; o < out; ++o) {
    const double* row = w.data() + o * in;
    double acc = b[o];
    for (size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    z[o] = acc;
  }
}

bool all_finite(const std::vector<std::vector<double>>& blocks) {
  for (const auto& block : blocks) {
    double sum = 0.0;
    for (double v : block) sum += v;
    if (!std::isfinite(sum)) return false;
  }
  return true;
}

}  // namespace

ModelState init_model(const MlpSpec& spec) {
  if (spec.layer_sizes.size() < 2)
    throw std::invalid_argument("init_model: need at least input and output widths");
  for (int w : spec.layer_sizes)
    if (w < 1) throw std::invalid_argument("init_model: layer widths must be >= 1");

  ModelState state;
  state.sizes = spec.layer_sizes;
  state.activation = spec.activation;
  Rng rng(spec.init_seed);
  for (size_t l = 1; l < spec.layer_sizes.size(); ++l) {
    const int fan_in = spec.layer_sizes[l - 1];
    const int fan_out = spec.layer_sizes[l];
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> w(static_cast<size_t>(fan_out) * fan_in);
    for (double& v : w) v = rng.uniform(-s, s);
    state.weights.push_back(std::move(w));
    state.biases.emplace_back(fan_out, 0.0);
  }
  return state;
}

std::vector<double> forward(const ModelState& state, std::span<const double> x) {
  check_input_width(state, x.size());
  std::vector<double> current(x.begin(), x.end());
  std::vector<double> z;
  for (size_t l = 0; l < state.weights.size(); ++l) {
    affine(state.weights[l], state.biases[l], current, z);
    if (l + 1 < state.weights.size())
      for (size_t o = 0; o < z.size(); ++o) z[o] = activate(state.activation, z[o]);
    current = z;
  }
  return current;
}

int predict(const ModelState& state, std::span<const double> x) {
  const auto logits = forward(state, x);
  int best = 0;
  for (size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = static_cast<int>(i);
  return best;
}

std::vector<int> predict_all(const ModelState& state, const LabeledDataset& data) {
  std::vector<int> preds(data.size());
  for (int i = 0; i < data.size(); ++i) preds[i] = predict(state, data.row(i));
  return preds;
}

TrainTrace train(ModelState& state, const LabeledDataset& data, const LossConfig& loss,
                 const TrainConfig& cfg) {
  if (data.size() == 0) throw std::invalid_argument("train: dataset is empty");
  if (data.d != state.input_width())
    throw std::invalid_argument("train: dataset width " + std::to_string(data.d) +
                                " != model input width " + std::to_string(state.input_width()));
  if (data.k != state.output_width())
    throw std::invalid_argument("train: dataset has " + std::to_string(data.k) +
                                " classes but model output width is " +
                                std::to_string(state.output_width()));
  if (cfg.epochs < 0 || cfg.batch_size < 1)
    throw std::invalid_argument("train: epochs must be >= 0 and batch_size >= 1");
  if (!(cfg.learning_rate >= 0.0))
    throw std::invalid_argument("train: learning_rate must be >= 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw std::invalid_argument("train: momentum must be in [0, 1)");
  validate_loss_config(loss);
  if (loss.variant != LossVariant::kCrossEntropy && loss.penalty.k != data.k)
    throw std::invalid_argument("train: penalty matrix size " + std::to_string(loss.penalty.k) +
                                " != class count " + std::to_string(data.k));

  const size_t layers = state.weights.size();
  std::vector<std::vector<double>> grad_w(layers), grad_b(layers);
  std::vector<std::vector<double>> vel_w(layers), vel_b(layers);
  for (size_t l = 0; l < layers; ++l) {
    grad_w[l].assign(state.weights[l].size(), 0.0);
    grad_b[l].assign(state.biases[l].size(), 0.0);
    vel_w[l].assign(state.weights[l].size(), 0.0);
    vel_b[l].assign(state.biases[l].size(), 0.0);
  }

  // Per-example buffers reused across the whole run.
  std::vector<std::vector<double>> pre(layers), act(layers);
  std::vector<std::vector<double>> delta(layers);

  Rng shuffle_rng(cfg.shuffle_seed);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  TrainTrace trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    double epoch_loss = 0.0;
    for (int start = 0; start < data.size(); start += cfg.batch_size) {
      const int batch = std::min(cfg.batch_size, data.size() - start);
      for (size_t l = 0; l < layers; ++l) {
        std::fill(grad_w[l].begin(), grad_w[l].end(), 0.0);
        std::fill(grad_b[l].begin(), grad_b[l].end(), 0.0);
      }

      for (int b = 0; b < batch; ++b) {
        const int row = order[start + b];
        const auto x = data.row(row);

        // Forward, keeping pre-activations and activations per layer.
        std::span<const double> input = x;
        for (size_t l = 0; l < layers; ++l) {
          affine(state.weights[l], state.biases[l], input, pre[l]);
          if (l + 1 < layers) {
            act[l].resize(pre[l].size());
            for (size_t o = 0; o < pre[l].size(); ++o)
              act[l][o] = activate(state.activation, pre[l][o]);
            input = act[l];
          }
        }

        // Finite weights can still overflow the activations once training
        // blows up; treat that as the same divergence.
        for (double z : pre[layers - 1])
          if (!std::isfinite(z)) throw TrainingDivergence(epoch, state.step + 1);

        const auto lv = loss_value_and_grad(pre[layers - 1], Target::one_hot(data.labels[row]),
                                            loss);
        epoch_loss += lv.value;

        // Backward: delta holds dL/dz per layer.
        delta[layers - 1] = lv.grad;
        for (size_t l = layers - 1; l > 0; --l) {
          const size_t out = state.biases[l].size();
          const size_t in = state.biases[l - 1].size();
          delta[l - 1].assign(in, 0.0);
          for (size_t o = 0; o < out; ++o) {
            const double dz = delta[l][o];
            if (dz == 0.0) continue;
            const double* row_w = state.weights[l].data() + o * in;
            for (size_t i = 0; i < in; ++i) delta[l - 1][i] += row_w[i] * dz;
          }
          for (size_t i = 0; i < in; ++i)
            delta[l - 1][i] *= activate_prime(state.activation, pre[l - 1][i], act[l - 1][i]);
        }

        for (size_t l = 0; l < layers; ++l) {
          const std::span<const double> below =
              l == 0 ? x : std::span<const double>(act[l - 1]);
          const size_t out = state.biases[l].size();
          const size_t in = below.size();
          for (size_t o = 0; o < out; ++o) {
            const double dz = delta[l][o];
            if (dz == 0.0) continue;
            double* grow = grad_w[l].data() + o * in;
            for (size_t i = 0; i < in; ++i) grow[i] += dz * below[i];
            grad_b[l][o] += dz;
          }
        }
      }

      const double scale = 1.0 / batch;
      for (size_t l = 0; l < layers; ++l) {
        for (size_t i = 0; i < grad_w[l].size(); ++i) {
          vel_w[l][i] = cfg.momentum * vel_w[l][i] + grad_w[l][i] * scale;
          state.weights[l][i] -= cfg.learning_rate * vel_w[l][i];
        }
        for (size_t i = 0; i < grad_b[l].size(); ++i) {
          vel_b[l][i] = cfg.momentum * vel_b[l][i] + grad_b[l][i] * scale;
          state.biases[l][i] -= cfg.learning_rate * vel_b[l][i];
        }
      }
      ++state.step;
      if (!all_finite(state.weights) || !all_finite(state.biases))
        throw TrainingDivergence(epoch, state.step);
    }
    trace.epoch_mean_loss.push_back(epoch_loss / data.size());
  }
  return trace;
}

namespace {

void write_u32_le(std::ofstream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64_le(std::ofstream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32_le(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("checkpoint: truncated header in " + path);
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

uint64_t read_u64_le(std::ifstream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw std::runtime_error("checkpoint: truncated header in " + path);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

void write_doubles_le(std::ofstream& out, const std::vector<double>& values) {
  for (double v : values) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
}

void read_doubles_le(std::ifstream& in, std::vector<double>& values, const std::string& path) {
  for (double& v : values) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
      throw std::runtime_error("checkpoint: truncated parameter block in " + path);
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= uint64_t(b[i]) << (8 * i);
    std::memcpy(&v, &bits, 8);
  }
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for write");
  out.write(kCheckpointMagic, 4);
  write_u32_le(out, kCheckpointVersion);
  write_u32_le(out, state.activation == Activation::kRelu ? 0 : 1);
  write_u32_le(out, static_cast<uint32_t>(state.sizes.size()));
  for (int w : state.sizes) write_u32_le(out, static_cast<uint32_t>(w));
  write_u64_le(out, state.step);
  for (size_t l = 0; l < state.weights.size(); ++l) {
    write_doubles_le(out, state.weights[l]);
    write_doubles_le(out, state.biases[l]);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = read_u32_le(in, path);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) +
                             " in " + path);
  const uint32_t activation_id = read_u32_le(in, path);
  if (activation_id > 1)
    throw std::runtime_error("checkpoint: unknown activation id " +
                             std::to_string(activation_id) + " in " + path);
  const uint32_t layer_count = read_u32_le(in, path);
  if (layer_count < 2) throw std::runtime_error("checkpoint: fewer than two layers in " + path);

  ModelState state;
  state.activation = activation_id == 0 ? Activation::kRelu : Activation::kTanh;
  state.sizes.resize(layer_count);
  for (uint32_t l = 0; l < layer_count; ++l) {
    state.sizes[l] = static_cast<int>(read_u32_le(in, path));
    if (state.sizes[l] < 1) throw std::runtime_error("checkpoint: bad layer width in " + path);
  }
  state.step = read_u64_le(in, path);
  for (uint32_t l = 1; l < layer_count; ++l) {
    std::vector<double> w(static_cast<size_t>(state.sizes[l]) * state.sizes[l - 1]);
    std::vector<double> b(state.sizes[l]);
    read_doubles_le(in, w, path);
    read_doubles_le(in, b, path);
    state.weights.push_back(std::move(w));
    state.biases.push_back(std::move(b));
  }
  return state;
}

}  // namespace costloss
