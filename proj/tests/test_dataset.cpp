#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "ssn/dataset.hpp"
#include "ssn/rng.hpp"

using namespace ssn;

namespace {

void push_u32_be(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(std::uint8_t(v >> 24));
  b.push_back(std::uint8_t(v >> 16));
  b.push_back(std::uint8_t(v >> 8));
  b.push_back(std::uint8_t(v));
}

std::vector<std::uint8_t> make_idx_images(int count, int h, int w,
                                          const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> b;
  push_u32_be(b, 0x00000803u);
  push_u32_be(b, std::uint32_t(count));
  push_u32_be(b, std::uint32_t(h));
  push_u32_be(b, std::uint32_t(w));
  b.insert(b.end(), pixels.begin(), pixels.end());
  return b;
}

std::vector<std::uint8_t> make_idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> b;
  push_u32_be(b, 0x00000801u);
  push_u32_be(b, std::uint32_t(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

LabeledData tiny_dataset() {
  // 6 images of 2x2, labels 3,5,3,9,5,3 with identity class map.
  LabeledData d;
  d.width = 2;
  d.height = 2;
  d.class_map.resize(10);
  std::iota(d.class_map.begin(), d.class_map.end(), 0);
  d.images.resize(6, 4);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index p = 0; p < 4; ++p) d.images(i, p) = std::uint8_t((i + p) % 2);
  d.labels = {3, 5, 3, 9, 5, 3};
  return d;
}

}  // namespace

TEST_CASE("idx image parsing round-trips pixels and rejects malformed input") {
  std::vector<std::uint8_t> pix(2 * 3 * 4);
  std::iota(pix.begin(), pix.end(), std::uint8_t(10));
  const auto bytes = make_idx_images(2, 3, 4, pix);
  const RawImages ri = parse_idx_images(bytes);
  CHECK(ri.count == 2);
  CHECK(ri.height == 3);
  CHECK(ri.width == 4);
  REQUIRE(ri.pixels.size() == pix.size());
  CHECK(std::equal(pix.begin(), pix.end(), ri.pixels.begin()));

  // Zero images is a valid (empty) file.
  const RawImages empty = parse_idx_images(make_idx_images(0, 3, 4, {}));
  CHECK(empty.count == 0);
  CHECK(empty.pixels.empty());

  auto bad_magic = bytes;
  bad_magic[3] = 0x01;
  CHECK_THROWS_WITH_AS(static_cast<void>(parse_idx_images(bad_magic)),
                       doctest::Contains("0x00000801"), IoError);
  CHECK_THROWS_WITH_AS(static_cast<void>(parse_idx_images(bad_magic)),
                       doctest::Contains("offset 0"), IoError);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 5);
  CHECK_THROWS_WITH_AS(static_cast<void>(parse_idx_images(truncated)),
                       doctest::Contains("expected 40 bytes, got 35"), IoError);
  auto oversized = bytes;
  oversized.push_back(0);
  CHECK_THROWS_AS(static_cast<void>(parse_idx_images(oversized)), IoError);
  CHECK_THROWS_WITH_AS(static_cast<void>(parse_idx_images({0x00, 0x00})),
                       doctest::Contains("offset 0"), IoError);
}

TEST_CASE("idx label parsing") {
  const std::vector<std::uint8_t> labels{0, 9, 4, 255};
  const auto bytes = make_idx_labels(labels);
  CHECK(parse_idx_labels(bytes) == labels);

  auto bad = bytes;
  bad[3] = 0x03;
  CHECK_THROWS_WITH_AS(static_cast<void>(parse_idx_labels(bad)), doctest::Contains("magic"),
                       IoError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_WITH_AS(static_cast<void>(parse_idx_labels(truncated)),
                       doctest::Contains("expected 12 bytes, got 11"), IoError);
}

TEST_CASE("reduction uses the floor index map") {
  // For 28 -> 12 the source index per target index is floor(t*28/12):
  const std::vector<int> map{0, 2, 4, 7, 9, 11, 14, 16, 18, 21, 23, 25};
  std::vector<std::uint8_t> img(28 * 28);
  for (int r = 0; r < 28; ++r)
    for (int c = 0; c < 28; ++c) img[r * 28 + c] = std::uint8_t((r * 29 + c * 7) % 256);
  const auto red = reduce_image(img, 28, 12);
  REQUIRE(red.size() == 144);
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 12; ++c) CHECK(red[r * 12 + c] == img[map[r] * 28 + map[c]]);

  // Checkerboard: source parity pattern survives through the map.
  std::vector<std::uint8_t> board(28 * 28);
  for (int r = 0; r < 28; ++r)
    for (int c = 0; c < 28; ++c) board[r * 28 + c] = std::uint8_t((r + c) % 2);
  const auto red_board = reduce_image(board, 28, 12);
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 12; ++c) CHECK(red_board[r * 12 + c] == (map[r] + map[c]) % 2);

  // Identity when sizes match.
  const std::vector<std::uint8_t> small{1, 2, 3, 4};
  CHECK(reduce_image(small, 2, 2) == small);

  CHECK_THROWS_AS(static_cast<void>(reduce_image(img, 27, 12)), ConfigError);
  CHECK_THROWS_AS(static_cast<void>(reduce_image(small, 2, 3)), ConfigError);
}

TEST_CASE("binarization thresholds strictly above the per-image median") {
  const std::vector<std::uint8_t> constant(144, 77);
  const auto zeros = binarize(constant);
  CHECK(std::count(zeros.begin(), zeros.end(), 1) == 0);

  // Half 0, half 255: exactly the bright half is set.
  std::vector<std::uint8_t> half(144, 0);
  for (int i = 72; i < 144; ++i) half[i] = 255;
  const auto bits = binarize(half);
  for (int i = 0; i < 144; ++i) CHECK(bits[i] == (i >= 72 ? 1 : 0));

  // Popcount equals the strictly-above-median count from a sorting oracle.
  Rng rng(321);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint8_t> img(144);
    for (auto& p : img) p = std::uint8_t(rng.uniform_int(256));
    std::vector<std::uint8_t> sorted(img);
    std::sort(sorted.begin(), sorted.end());
    const std::uint8_t median = sorted[(sorted.size() - 1) / 2];
    const auto out = binarize(img);
    int expect = 0;
    for (auto p : img) expect += p > median ? 1 : 0;
    CHECK(std::count(out.begin(), out.end(), 1) == expect);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(out[i] == (img[i] > median ? 1 : 0));
  }
}

TEST_CASE("class selection re-indexes labels and persists the mapping") {
  const LabeledData d = tiny_dataset();
  const LabeledData sel = select_classes(d, {5, 3});
  REQUIRE(sel.labels.size() == 5);
  CHECK(sel.class_map == std::vector<int>{5, 3});
  // Original order preserved; 3 -> new 1, 5 -> new 0.
  CHECK(sel.labels == std::vector<int>{1, 0, 1, 0, 1});
  for (Eigen::Index r = 0, src = 0; r < sel.images.rows(); ++r, ++src) {
    while (d.labels[src] == 9) ++src;
    CHECK(sel.images.row(r) == d.images.row(src));
  }

  CHECK_THROWS_WITH_AS(static_cast<void>(select_classes(d, {3, 7})),
                       doctest::Contains("class 7 has no samples"), ConfigError);
  CHECK_THROWS_AS(static_cast<void>(select_classes(d, {})), ConfigError);
  CHECK_THROWS_AS(static_cast<void>(select_classes(d, {3, 3})), ConfigError);
}

TEST_CASE("full ingest of the bundled subsets") {
  const std::string dir = SSN_DATA_DIR;
  const std::vector<int> classes{0, 1, 4, 7};
  const LabeledData train = load_reduced_binary(dir + "/mnist/train-images-idx3-ubyte",
                                                dir + "/mnist/train-labels-idx1-ubyte", classes);
  CHECK(train.width == 12);
  CHECK(train.height == 12);
  CHECK(train.images.rows() == 3178);
  CHECK(train.class_map == classes);
  std::vector<int> counts(4, 0);
  for (int l : train.labels) ++counts[l];
  CHECK(counts == std::vector<int>{751, 877, 730, 820});

  // Ink polarity: images are mostly background with a bright stroke.
  const double on = mean_on_fraction(train);
  CHECK(on > 0.10);
  CHECK(on < 0.80);

  const LabeledData capped = load_reduced_binary(dir + "/mnist/train-images-idx3-ubyte",
                                                 dir + "/mnist/train-labels-idx1-ubyte", classes,
                                                 12, 200);
  CHECK(capped.images.rows() == 800);
  // Capping keeps the first 200 of each class in file order.
  std::vector<Eigen::Index> expect_rows;
  {
    std::vector<int> seen(4, 0);
    for (Eigen::Index i = 0; i < train.images.rows(); ++i)
      if (seen[train.labels[i]]++ < 200) expect_rows.push_back(i);
  }
  REQUIRE(static_cast<Eigen::Index>(expect_rows.size()) == capped.images.rows());
  bool rows_match = true;
  for (Eigen::Index i = 0; i < capped.images.rows(); ++i)
    rows_match = rows_match && capped.labels[i] == train.labels[expect_rows[i]] &&
                 capped.images.row(i) == train.images.row(expect_rows[i]);
  CHECK(rows_match);

  const LabeledData test = load_reduced_binary(dir + "/mnist/t10k-images-idx3-ubyte",
                                               dir + "/mnist/t10k-labels-idx1-ubyte", classes);
  CHECK(test.images.rows() == 1000);  // 250 per class

  // Deterministic ingest: a second load is bit-identical.
  const LabeledData again = load_reduced_binary(dir + "/mnist/train-images-idx3-ubyte",
                                                dir + "/mnist/train-labels-idx1-ubyte", classes);
  CHECK((again.images == train.images));
  CHECK(again.labels == train.labels);

  const LabeledData fashion = load_reduced_binary(dir + "/fmnist/train-images-idx3-ubyte",
                                                  dir + "/fmnist/train-labels-idx1-ubyte",
                                                  {0, 1, 2});
  CHECK(fashion.images.rows() == 2250);
  CHECK(fashion.n_classes() == 3);
  CHECK(mean_on_fraction(fashion) > 0.10);
  CHECK(mean_on_fraction(fashion) < 0.80);
}

TEST_CASE("capped ingest keeps the first K per class") {
  // Synthetic file where class order is interleaved and trackable.
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;
  for (int i = 0; i < 12; ++i) {
    std::vector<std::uint8_t> img(4 * 4, 0);
    img[0] = std::uint8_t(200 + i);  // unique bright pixel -> bit 0 set
    pixels.insert(pixels.end(), img.begin(), img.end());
    labels.push_back(std::uint8_t(i % 2));
  }
  const std::string ip = tmp_path("ssn_idx_images"), lp = tmp_path("ssn_idx_labels");
  {
    std::ofstream os(ip, std::ios::binary);
    const auto b = make_idx_images(12, 4, 4, pixels);
    os.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
  }
  {
    std::ofstream os(lp, std::ios::binary);
    const auto b = make_idx_labels(labels);
    os.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
  }
  const LabeledData d = load_reduced_binary(ip, lp, {0, 1}, 4, 3);
  CHECK(d.images.rows() == 6);
  CHECK(d.labels == std::vector<int>{0, 1, 0, 1, 0, 1});
  std::remove(ip.c_str());
  std::remove(lp.c_str());
}

TEST_CASE("packed record round-trips and rejects corruption") {
  LabeledData d = tiny_dataset();
  d = select_classes(d, {3, 5, 9});
  const std::string path = tmp_path("ssn_test.rbin");
  save_rbin(path, d);
  const LabeledData back = load_rbin(path);
  CHECK(back.width == d.width);
  CHECK(back.height == d.height);
  CHECK(back.class_map == d.class_map);
  CHECK(back.labels == d.labels);
  CHECK((back.images == d.images));

  // A 12x12 record exercises multi-byte bitmap packing.
  LabeledData big;
  big.width = 12;
  big.height = 12;
  big.class_map = {0, 1};
  big.images.resize(5, 144);
  Rng rng(7);
  for (Eigen::Index i = 0; i < big.images.rows(); ++i)
    for (Eigen::Index p = 0; p < 144; ++p) big.images(i, p) = std::uint8_t(rng.uniform_int(2));
  big.labels = {0, 1, 1, 0, 1};
  save_rbin(path, big);
  const LabeledData big_back = load_rbin(path);
  CHECK((big_back.images == big.images));
  CHECK(big_back.labels == big.labels);

  auto bytes = read_file_bytes(path);
  auto bad = bytes;
  bad[0] = 'X';
  {
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bad.data()), std::streamsize(bad.size()));
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(load_rbin(path)), doctest::Contains("magic"), IoError);
  auto shorter = bytes;
  shorter.pop_back();
  {
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(shorter.data()), std::streamsize(shorter.size()));
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(load_rbin(path)), doctest::Contains("expected"), IoError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(static_cast<void>(load_rbin(path)), IoError);
}
