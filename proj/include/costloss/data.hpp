// data.hpp
//
// Dataset ingestion and generation: IDX binary parsing (MNIST layout),
// synthetic Gaussian blobs with optional super-class structure, class
// down-sampling with duplicate-back, and seeded splits. Datasets are
// immutable after load/generation and shared freely across runs.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "costloss/penalty.hpp"

namespace costloss {

struct LabeledDataset {
  int k = 0;  // class count
  int d = 0;  // feature width
  std::vector<double> features;  // row-major, size() * d
  std::vector<int> labels;
  std::optional<SuperClassMap> super_map;

  int size() const { return static_cast<int>(labels.size()); }
  std::span<const double> row(int i) const {
    return {features.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)};
  }
  std::vector<int> class_counts() const;
};

struct BlobSpec {
  int k = 10;
  int d = 20;
  int n_per_class = 500;
  double center_spread = 1.0;   // sd of class (or super-class) centers around the origin
  double within_sigma = 1.0;    // sd of points around their class center
  int super_classes = 0;        // 0 = flat; m > 0 groups classes into k/m-sized blocks
  double group_spread = 0.35;   // sd of class centers around their super-center
  uint64_t seed = 0;
};

// IDX files: 4-byte big-endian magic (0x00000803 images, 0x00000801
// labels), big-endian u32 dimension sizes, unsigned-byte payload. Pixels
// are scaled by 1/255 into [0, 1]. Image and label counts must match.
LabeledDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// Writes the quantized byte representation round(v * 255). Images go out
// as count x d x 1 so arbitrary feature widths round-trip.
void save_mnist_idx(const LabeledDataset& data, const std::string& images_path,
                    const std::string& labels_path);

// n_per_class points per class around seeded Gaussian centers. With
// super_classes = m > 0, class centers cluster around m super-centers so
// same-super-class classes overlap more, and the block SuperClassMap is
// attached.
LabeledDataset make_blobs(const BlobSpec& spec);

// Keeps a seeded random n_keep examples of the class (in their original
// positions); with duplicate_back and n_keep > 0, the kept examples are
// repeated cyclically at the end to restore the original class count.
// Every example of every other class is untouched.
LabeledDataset downsample_class(const LabeledDataset& data, int cls, int n_keep,
                                bool duplicate_back, uint64_t seed);

// Seeded disjoint partition into |fractions| parts; fractions must be
// positive and sum to 1. Part sizes are floor(N * f) with the remainder
// given to the earliest parts; original example order is preserved inside
// each part, so fractions (1.0,) is the identity.
std::vector<LabeledDataset> split(const LabeledDataset& data, std::span<const double> fractions,
                                  uint64_t seed);

}  // namespace costloss
