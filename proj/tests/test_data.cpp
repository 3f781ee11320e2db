#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>

#include "costloss/data.hpp"
#include "costloss/metrics.hpp"
#include "costloss/model.hpp"

using namespace costloss;
namespace fs = std::filesystem;

namespace {

void append_u32_be(std::string& bytes, uint32_t v) {
  bytes.push_back(static_cast<char>(v >> 24));
  bytes.push_back(static_cast<char>(v >> 16));
  bytes.push_back(static_cast<char>(v >> 8));
  bytes.push_back(static_cast<char>(v));
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), bytes.size());
}

struct IdxFixture {
  fs::path images = fs::temp_directory_path() / "costloss_images.idx";
  fs::path labels = fs::temp_directory_path() / "costloss_labels.idx";

  // Two 2x2 images with known pixels, labels 3 and 7.
  void write(uint32_t image_magic = 0x00000803, uint32_t label_magic = 0x00000801,
             uint32_t label_count = 2, bool truncate_pixels = false) {
    std::string image_bytes;
    append_u32_be(image_bytes, image_magic);
    append_u32_be(image_bytes, 2);
    append_u32_be(image_bytes, 2);
    append_u32_be(image_bytes, 2);
    const unsigned char pixels[8] = {0, 51, 102, 255, 10, 20, 30, 40};
    const size_t pixel_count = truncate_pixels ? 5 : 8;
    image_bytes.append(reinterpret_cast<const char*>(pixels), pixel_count);
    write_bytes(images, image_bytes);

    std::string label_bytes;
    append_u32_be(label_bytes, label_magic);
    append_u32_be(label_bytes, label_count);
    label_bytes.push_back(3);
    label_bytes.push_back(7);
    write_bytes(labels, label_bytes);
  }

  ~IdxFixture() {
    fs::remove(images);
    fs::remove(labels);
  }
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("IDX fixture built byte-by-byte recovers exact pixel values") {
  IdxFixture fixture;
  fixture.write();
  const auto data = load_mnist_idx(fixture.images.string(), fixture.labels.string());
  CHECK(data.size() == 2);
  CHECK(data.d == 4);
  CHECK(data.k == 8);  // labels 3 and 7
  CHECK(data.labels == std::vector<int>{3, 7});
  CHECK(data.features[0] == 0.0);
  CHECK(data.features[1] == doctest::Approx(51.0 / 255.0).epsilon(1e-15));
  CHECK(data.features[2] == doctest::Approx(102.0 / 255.0).epsilon(1e-15));
  CHECK(data.features[3] == 1.0);
  CHECK(data.features[7] == doctest::Approx(40.0 / 255.0).epsilon(1e-15));
}

TEST_CASE("IDX failure modes have distinct diagnostics") {
  IdxFixture fixture;
  SUBCASE("wrong magic in the image file") {
    fixture.write(/*image_magic=*/0x00000801);
    CHECK_THROWS_WITH_AS(load_mnist_idx(fixture.images.string(), fixture.labels.string()),
                         doctest::Contains("wrong magic"), std::runtime_error);
  }
  SUBCASE("labels file with the images magic") {
    fixture.write(0x00000803, /*label_magic=*/0x00000803);
    CHECK_THROWS_WITH_AS(load_mnist_idx(fixture.images.string(), fixture.labels.string()),
                         doctest::Contains("wrong magic"), std::runtime_error);
  }
  SUBCASE("count mismatch") {
    fixture.write(0x00000803, 0x00000801, /*label_count=*/3);
    CHECK_THROWS_WITH_AS(load_mnist_idx(fixture.images.string(), fixture.labels.string()),
                         doctest::Contains("count mismatch"), std::runtime_error);
  }
  SUBCASE("truncated payload") {
    fixture.write(0x00000803, 0x00000801, 2, /*truncate_pixels=*/true);
    CHECK_THROWS_WITH_AS(load_mnist_idx(fixture.images.string(), fixture.labels.string()),
                         doctest::Contains("truncated"), std::runtime_error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_WITH_AS(load_mnist_idx("/nonexistent/images", "/nonexistent/labels"),
                         doctest::Contains("cannot open"), std::runtime_error);
  }
}

TEST_CASE("IDX write/read round-trip is the identity on quantized bytes") {
  IdxFixture fixture;
  fixture.write();
  const auto data = load_mnist_idx(fixture.images.string(), fixture.labels.string());

  const fs::path images2 = fs::temp_directory_path() / "costloss_rt_images.idx";
  const fs::path labels2 = fs::temp_directory_path() / "costloss_rt_labels.idx";
  save_mnist_idx(data, images2.string(), labels2.string());
  const auto back = load_mnist_idx(images2.string(), labels2.string());
  CHECK(back.features == data.features);
  CHECK(back.labels == data.labels);
  CHECK(back.d == data.d);
  // Same payload bytes modulo the (2,2) vs (4,1) shape header.
  CHECK(slurp(images2).substr(16) == slurp(fixture.images).substr(16));
  fs::remove(images2);
  fs::remove(labels2);
}

TEST_CASE("make_blobs shapes and determinism") {
  BlobSpec spec;
  spec.k = 4;
  spec.d = 3;
  spec.n_per_class = 25;
  spec.seed = 9;
  const auto a = make_blobs(spec);
  CHECK(a.size() == 100);
  CHECK(a.d == 3);
  CHECK(a.k == 4);
  CHECK(a.class_counts() == std::vector<int>{25, 25, 25, 25});
  CHECK_FALSE(a.super_map.has_value());

  const auto b = make_blobs(spec);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);

  spec.seed = 10;
  const auto c = make_blobs(spec);
  CHECK(a.features != c.features);
}

TEST_CASE("make_blobs with vanishing overlap trains to 100%") {
  BlobSpec spec;
  spec.k = 4;
  spec.d = 5;
  spec.n_per_class = 30;
  spec.center_spread = 2.0;
  spec.within_sigma = 1e-9;
  spec.seed = 4;
  const auto data = make_blobs(spec);

  MlpSpec mlp;
  mlp.layer_sizes = {5, 16, 4};
  mlp.init_seed = 1;
  ModelState state = init_model(mlp);
  LossConfig loss;
  TrainConfig tc;
  tc.epochs = 20;
  tc.batch_size = 16;
  tc.learning_rate = 0.1;
  tc.shuffle_seed = 1;
  train(state, data, loss, tc);
  int correct = 0;
  for (int i = 0; i < data.size(); ++i) correct += predict(state, data.row(i)) == data.labels[i];
  CHECK(correct == data.size());
}

TEST_CASE("hierarchical blobs carry the block map and beat chance containment") {
  BlobSpec spec;
  spec.k = 10;
  spec.d = 10;
  spec.n_per_class = 120;
  spec.center_spread = 1.0;
  spec.within_sigma = 0.9;
  spec.super_classes = 5;
  spec.group_spread = 0.35;

  double within_sum = 0.0;
  int measured = 0;
  for (uint64_t seed : {31ull, 32ull, 33ull}) {
    spec.seed = seed;
    const auto all = make_blobs(spec);
    REQUIRE(all.super_map.has_value());
    CHECK(all.super_map->m == 5);

    // First 100 rows per class train, remainder held out.
    LabeledDataset train_data, test_data;
    train_data.k = test_data.k = all.k;
    train_data.d = test_data.d = all.d;
    train_data.super_map = test_data.super_map = all.super_map;
    std::vector<int> seen(all.k, 0);
    for (int i = 0; i < all.size(); ++i) {
      auto& dst = seen[all.labels[i]]++ < 100 ? train_data : test_data;
      const auto r = all.row(i);
      dst.features.insert(dst.features.end(), r.begin(), r.end());
      dst.labels.push_back(all.labels[i]);
    }

    MlpSpec mlp;
    mlp.layer_sizes = {10, 32, 10};
    mlp.init_seed = seed;
    ModelState state = init_model(mlp);
    LossConfig loss;
    TrainConfig tc;
    tc.epochs = 8;
    tc.batch_size = 32;
    tc.shuffle_seed = seed + 1;
    train(state, train_data, loss, tc);

    const auto cm = confusion(predict_all(state, test_data), test_data.labels, test_data.k);
    if (const auto frac = within_superclass_fraction(cm, *all.super_map)) {
      within_sum += *frac;
      ++measured;
    }
  }
  REQUIRE(measured > 0);
  // Chance level for group size 2 of 10 classes: (2-1)/(10-1).
  CHECK(within_sum / measured > 1.0 / 9.0);
}

TEST_CASE("downsample_class") {
  BlobSpec spec;
  spec.k = 3;
  spec.d = 2;
  spec.n_per_class = 30;
  spec.seed = 8;
  const auto data = make_blobs(spec);

  SUBCASE("keep everything leaves the dataset unchanged") {
    const auto out = downsample_class(data, 1, 30, false, 99);
    CHECK(out.features == data.features);
    CHECK(out.labels == data.labels);
  }
  SUBCASE("keep zero removes the class entirely") {
    const auto out = downsample_class(data, 1, 0, true, 99);
    CHECK(out.size() == 60);
    for (int label : out.labels) CHECK(label != 1);
  }
  SUBCASE("duplicate-back restores the class count with n_keep distinct rows") {
    const auto out = downsample_class(data, 1, 10, true, 99);
    CHECK(out.class_counts() == std::vector<int>{30, 30, 30});
    std::set<std::vector<double>> distinct;
    for (int i = 0; i < out.size(); ++i) {
      if (out.labels[i] != 1) continue;
      const auto r = out.row(i);
      distinct.insert(std::vector<double>(r.begin(), r.end()));
    }
    CHECK(distinct.size() == 10);
  }
  SUBCASE("other classes are untouched, in order") {
    const auto out = downsample_class(data, 1, 5, true, 99);
    std::vector<std::vector<double>> before, after;
    for (int i = 0; i < data.size(); ++i)
      if (data.labels[i] != 1) {
        const auto r = data.row(i);
        before.emplace_back(r.begin(), r.end());
      }
    for (int i = 0; i < out.size(); ++i)
      if (out.labels[i] != 1) {
        const auto r = out.row(i);
        after.emplace_back(r.begin(), r.end());
      }
    CHECK(before == after);
  }
  SUBCASE("selection is seeded") {
    const auto a = downsample_class(data, 1, 10, false, 1);
    const auto b = downsample_class(data, 1, 10, false, 1);
    const auto c = downsample_class(data, 1, 10, false, 2);
    CHECK(a.features == b.features);
    CHECK(a.features != c.features);
  }
  SUBCASE("n_keep beyond the class size is rejected") {
    CHECK_THROWS_AS(downsample_class(data, 1, 31, false, 0), std::invalid_argument);
    CHECK_THROWS_AS(downsample_class(data, 5, 1, false, 0), std::invalid_argument);
  }
}

TEST_CASE("split") {
  BlobSpec spec;
  spec.k = 2;
  spec.d = 1;
  spec.n_per_class = 30;  // 60 examples
  spec.seed = 12;
  const auto data = make_blobs(spec);

  SUBCASE("single fraction is the identity") {
    const double fractions[] = {1.0};
    const auto parts = split(data, fractions, 77);
    REQUIRE(parts.size() == 1);
    CHECK(parts[0].features == data.features);
    CHECK(parts[0].labels == data.labels);
  }
  SUBCASE("55k/5k-style proportions give exact sizes") {
    const double fractions[] = {55000.0 / 60000.0, 5000.0 / 60000.0};
    const auto parts = split(data, fractions, 77);
    CHECK(parts[0].size() == 55);
    CHECK(parts[1].size() == 5);
  }
  SUBCASE("remainder goes to the earliest parts") {
    BlobSpec odd = spec;
    odd.k = 1;
    odd.n_per_class = 11;
    const auto eleven = make_blobs(odd);
    const double fractions[] = {0.5, 0.5};
    const auto parts = split(eleven, fractions, 1);
    CHECK(parts[0].size() == 6);
    CHECK(parts[1].size() == 5);
  }
  SUBCASE("partition is disjoint and exhaustive") {
    const double fractions[] = {0.5, 0.3, 0.2};
    const auto parts = split(data, fractions, 42);
    CHECK(parts[0].size() + parts[1].size() + parts[2].size() == data.size());
    std::multiset<double> original(data.features.begin(), data.features.end());
    std::multiset<double> recombined;
    for (const auto& part : parts)
      recombined.insert(part.features.begin(), part.features.end());
    CHECK(recombined == original);
  }
  SUBCASE("seeded and reproducible") {
    const double fractions[] = {0.5, 0.5};
    const auto a = split(data, fractions, 3);
    const auto b = split(data, fractions, 3);
    const auto c = split(data, fractions, 4);
    CHECK(a[0].features == b[0].features);
    CHECK(a[0].features != c[0].features);
  }
  SUBCASE("invalid fractions rejected") {
    const double bad_sum[] = {0.5, 0.4};
    CHECK_THROWS_AS(split(data, bad_sum, 0), std::invalid_argument);
    const double negative[] = {1.5, -0.5};
    CHECK_THROWS_AS(split(data, negative, 0), std::invalid_argument);
  }
}
