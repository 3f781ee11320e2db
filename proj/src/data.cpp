#include "costloss/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "costloss/rng.hpp"

namespace costloss {

namespace {

constexpr uint32_t kImagesMagic = 0x00000803;
constexpr uint32_t kLabelsMagic = 0x00000801;

uint32_t read_u32_be(std::ifstream& in, const std::string& path, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("IDX: truncated file " + path + " while reading " + what);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void write_u32_be(std::ofstream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

std::vector<int> LabeledDataset::class_counts() const {
  std::vector<int> counts(k, 0);
  for (int label : labels) ++counts[label];
  return counts;
}

LabeledDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw std::runtime_error("IDX: cannot open image file " + images_path);
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw std::runtime_error("IDX: cannot open label file " + labels_path);

  const uint32_t image_magic = read_u32_be(images, images_path, "magic");
  if (image_magic != kImagesMagic)
    throw std::runtime_error("IDX: wrong magic in image file " + images_path + ": got 0x" +
                             [&] { char b[16]; std::snprintf(b, sizeof(b), "%08x", image_magic); return std::string(b); }() +
                             ", expected 0x00000803");
  const uint32_t label_magic = read_u32_be(labels, labels_path, "magic");
  if (label_magic != kLabelsMagic)
    throw std::runtime_error("IDX: wrong magic in label file " + labels_path + ": got 0x" +
                             [&] { char b[16]; std::snprintf(b, sizeof(b), "%08x", label_magic); return std::string(b); }() +
                             ", expected 0x00000801");

  const uint32_t image_count = read_u32_be(images, images_path, "image count");
  const uint32_t rows = read_u32_be(images, images_path, "row count");
  const uint32_t cols = read_u32_be(images, images_path, "column count");
  const uint32_t label_count = read_u32_be(labels, labels_path, "label count");
  if (image_count != label_count)
    throw std::runtime_error("IDX: count mismatch: " + std::to_string(image_count) +
                             " images vs " + std::to_string(label_count) + " labels");

  const size_t d = static_cast<size_t>(rows) * cols;
  std::vector<unsigned char> pixels(static_cast<size_t>(image_count) * d);
  if (!images.read(reinterpret_cast<char*>(pixels.data()), pixels.size()))
    throw std::runtime_error("IDX: truncated image payload in " + images_path + ": expected " +
                             std::to_string(pixels.size()) + " bytes");
  std::vector<unsigned char> raw_labels(image_count);
  if (!labels.read(reinterpret_cast<char*>(raw_labels.data()), raw_labels.size()))
    throw std::runtime_error("IDX: truncated label payload in " + labels_path + ": expected " +
                             std::to_string(raw_labels.size()) + " bytes");

  LabeledDataset data;
  data.d = static_cast<int>(d);
  data.features.resize(pixels.size());
  for (size_t i = 0; i < pixels.size(); ++i) data.features[i] = pixels[i] / 255.0;
  data.labels.resize(image_count);
  int max_label = 0;
  for (size_t i = 0; i < raw_labels.size(); ++i) {
    data.labels[i] = raw_labels[i];
    max_label = std::max(max_label, data.labels[i]);
  }
  data.k = max_label + 1;
  return data;
}

void save_mnist_idx(const LabeledDataset& data, const std::string& images_path,
                    const std::string& labels_path) {
  std::ofstream images(images_path, std::ios::binary);
  if (!images) throw std::runtime_error("IDX: cannot open image file for write " + images_path);
  write_u32_be(images, kImagesMagic);
  write_u32_be(images, static_cast<uint32_t>(data.size()));
  write_u32_be(images, static_cast<uint32_t>(data.d));
  write_u32_be(images, 1);
  std::vector<unsigned char> pixels(data.features.size());
  for (size_t i = 0; i < data.features.size(); ++i) {
    const double v = std::clamp(data.features[i], 0.0, 1.0);
    pixels[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  images.write(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  if (!images) throw std::runtime_error("IDX: write failed for " + images_path);

  std::ofstream labels(labels_path, std::ios::binary);
  if (!labels) throw std::runtime_error("IDX: cannot open label file for write " + labels_path);
  write_u32_be(labels, kLabelsMagic);
  write_u32_be(labels, static_cast<uint32_t>(data.size()));
  for (int label : data.labels) {
    const unsigned char b = static_cast<unsigned char>(label);
    labels.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!labels) throw std::runtime_error("IDX: write failed for " + labels_path);
}

LabeledDataset make_blobs(const BlobSpec& spec) {
  if (spec.k < 1 || spec.d < 1 || spec.n_per_class < 1)
    throw std::invalid_argument("make_blobs: k, d, n_per_class must be >= 1");
  if (!(spec.within_sigma >= 0.0) || !(spec.center_spread >= 0.0))
    throw std::invalid_argument("make_blobs: spreads must be non-negative");
  if (spec.super_classes > 0 && spec.k % spec.super_classes != 0)
    throw std::invalid_argument("make_blobs: k must divide into super_classes groups");

  Rng rng(spec.seed);
  const bool hierarchical = spec.super_classes > 0;

  // Centers first, then points, so the layout of draws is stable.
  std::vector<double> centers(static_cast<size_t>(spec.k) * spec.d);
  if (hierarchical) {
    const int group = spec.k / spec.super_classes;
    std::vector<double> super_centers(static_cast<size_t>(spec.super_classes) * spec.d);
    for (double& v : super_centers) v = rng.normal(0.0, spec.center_spread);
    for (int c = 0; c < spec.k; ++c) {
      const int s = c / group;
      for (int j = 0; j < spec.d; ++j)
        centers[static_cast<size_t>(c) * spec.d + j] =
            super_centers[static_cast<size_t>(s) * spec.d + j] + rng.normal(0.0, spec.group_spread);
    }
  } else {
    for (double& v : centers) v = rng.normal(0.0, spec.center_spread);
  }

  LabeledDataset data;
  data.k = spec.k;
  data.d = spec.d;
  data.features.reserve(static_cast<size_t>(spec.k) * spec.n_per_class * spec.d);
  data.labels.reserve(static_cast<size_t>(spec.k) * spec.n_per_class);
  for (int c = 0; c < spec.k; ++c) {
    for (int i = 0; i < spec.n_per_class; ++i) {
      for (int j = 0; j < spec.d; ++j)
        data.features.push_back(centers[static_cast<size_t>(c) * spec.d + j] +
                                rng.normal(0.0, spec.within_sigma));
      data.labels.push_back(c);
    }
  }
  if (hierarchical) data.super_map = SuperClassMap::blocks(spec.k, spec.super_classes);
  return data;
}

LabeledDataset downsample_class(const LabeledDataset& data, int cls, int n_keep,
                                bool duplicate_back, uint64_t seed) {
  if (cls < 0 || cls >= data.k)
    throw std::invalid_argument("downsample_class: class " + std::to_string(cls) +
                                " outside [0, " + std::to_string(data.k) + ")");
  std::vector<int> class_rows;
  for (int i = 0; i < data.size(); ++i)
    if (data.labels[i] == cls) class_rows.push_back(i);
  const int available = static_cast<int>(class_rows.size());
  if (n_keep < 0 || n_keep > available)
    throw std::invalid_argument("downsample_class: n_keep=" + std::to_string(n_keep) +
                                " outside [0, " + std::to_string(available) + "] for class " +
                                std::to_string(cls));

  Rng rng(seed);
  shuffle(class_rows, rng);
  std::vector<int> kept(class_rows.begin(), class_rows.begin() + n_keep);
  std::sort(kept.begin(), kept.end());
  std::vector<uint8_t> keep_row(data.size(), 0);
  for (int i : kept) keep_row[i] = 1;

  LabeledDataset out;
  out.k = data.k;
  out.d = data.d;
  out.super_map = data.super_map;
  for (int i = 0; i < data.size(); ++i) {
    if (data.labels[i] == cls && !keep_row[i]) continue;
    const auto r = data.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(data.labels[i]);
  }
  if (duplicate_back && n_keep > 0) {
    for (int t = 0; t < available - n_keep; ++t) {
      const auto r = data.row(kept[t % n_keep]);
      out.features.insert(out.features.end(), r.begin(), r.end());
      out.labels.push_back(cls);
    }
  }
  return out;
}

std::vector<LabeledDataset> split(const LabeledDataset& data, std::span<const double> fractions,
                                  uint64_t seed) {
  if (fractions.empty()) throw std::invalid_argument("split: no fractions given");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split: fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split: fractions sum to " + std::to_string(sum) +
                                ", expected 1");

  const int n = data.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);

  std::vector<int> sizes(fractions.size());
  int assigned = 0;
  for (size_t p = 0; p < fractions.size(); ++p) {
    sizes[p] = static_cast<int>(std::floor(n * fractions[p]));
    assigned += sizes[p];
  }
  for (int r = 0; r < n - assigned; ++r) ++sizes[r % fractions.size()];

  std::vector<LabeledDataset> parts(fractions.size());
  int cursor = 0;
  for (size_t p = 0; p < fractions.size(); ++p) {
    std::vector<int> rows(order.begin() + cursor, order.begin() + cursor + sizes[p]);
    cursor += sizes[p];
    std::sort(rows.begin(), rows.end());  // keep original order inside each part
    LabeledDataset& part = parts[p];
    part.k = data.k;
    part.d = data.d;
    part.super_map = data.super_map;
    part.features.reserve(rows.size() * data.d);
    part.labels.reserve(rows.size());
    for (int i : rows) {
      const auto r = data.row(i);
      part.features.insert(part.features.end(), r.begin(), r.end());
      part.labels.push_back(data.labels[i]);
    }
  }
  return parts;
}

}  // namespace costloss
