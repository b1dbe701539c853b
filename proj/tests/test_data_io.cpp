#include "playprune/data.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <set>

using namespace playprune;

namespace {

RawImages random_raw(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                     int classes, std::uint64_t seed) {
  Rng rng(seed);
  RawImages r;
  r.channels = c;
  r.height = h;
  r.width = w;
  for (std::size_t i = 0; i < n * c * h * w; ++i)
    r.pixels.push_back(static_cast<std::uint8_t>(rng.below(256)));
  for (std::size_t i = 0; i < n; ++i)
    r.labels.push_back(static_cast<int>(i % static_cast<std::size_t>(classes)));
  return r;
}

std::string tmp(const std::string &name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

DatasetSplit split_of(const RawImages &raw, std::size_t classes) {
  return decode_split(raw, classes, channel_stats(raw), SplitRole::Train);
}

bool error_mentions(const std::function<void()> &f, const std::string &needle) {
  try {
    f();
  } catch (const Error &e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

} // namespace

TEST(Idx, TenImagesDecodeToExpectedShape) {
  const auto raw = random_raw(10, 1, 28, 28, 10, 1);
  auto [im, lb] = encode_idx(raw);
  EXPECT_EQ(im[2], 0x08);
  EXPECT_EQ(im[3], 0x03);
  const auto back = decode_idx(im, lb);
  EXPECT_EQ(back, raw);
  const auto s = split_of(back, 10);
  EXPECT_EQ(s.images.shape(), (Shape{10, 1, 28, 28}));
  EXPECT_EQ(s.size(), 10u);
}

TEST(Idx, BadMagicReportsOffset) {
  const auto raw = random_raw(3, 1, 4, 4, 2, 2);
  auto [im, lb] = encode_idx(raw);
  im[3] = 0x01;
  EXPECT_TRUE(error_mentions([&] { decode_idx(im, lb); }, "byte offset 0"));
  auto [im2, lb2] = encode_idx(raw);
  lb2[3] = 0x03;
  EXPECT_TRUE(error_mentions([&] { decode_idx(im2, lb2); }, "bad magic"));
}

TEST(Idx, LengthMismatchRejected) {
  const auto raw = random_raw(3, 1, 4, 4, 2, 2);
  auto [im, lb] = encode_idx(raw);
  im.pop_back();
  EXPECT_TRUE(error_mentions([&] { decode_idx(im, lb); }, "byte offset 16"));
  auto [im2, lb2] = encode_idx(raw);
  lb2.push_back(0);
  EXPECT_THROW(decode_idx(im2, lb2), Error);
  std::vector<std::uint8_t> stub{0, 0};
  EXPECT_THROW(decode_idx(stub, lb2), Error);
}

TEST(Cifar, FiveRecords) {
  const auto raw = random_raw(5, 3, 32, 32, 10, 3);
  const auto bytes = encode_cifar(raw);
  EXPECT_EQ(bytes.size(), 5u * 3073u);
  const auto back = decode_cifar(bytes);
  EXPECT_EQ(back, raw);
  EXPECT_EQ(split_of(back, 10).images.shape(), (Shape{5, 3, 32, 32}));
}

TEST(Cifar, PartialRecordAndBadLabelRejected) {
  auto bytes = encode_cifar(random_raw(2, 3, 32, 32, 10, 4));
  auto cut = bytes;
  cut.resize(cut.size() - 5);
  EXPECT_TRUE(error_mentions([&] { decode_cifar(cut); }, "byte offset 3073"));
  bytes[3073] = 12;
  EXPECT_TRUE(error_mentions([&] { decode_cifar(bytes); }, "byte offset 3073"));
}

TEST(Synthetic, SameSeedBitIdentical) {
  SyntheticSpec s;
  s.seed = 7;
  s.classes = 4;
  s.train_size = 40;
  s.test_size = 12;
  const auto a = make_synthetic(s);
  const auto b = make_synthetic(s);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  s.seed = 8;
  EXPECT_FALSE(make_synthetic(s).first == a.first);
}

TEST(Synthetic, BalancedLabels) {
  SyntheticSpec s;
  s.classes = 4;
  s.train_size = 40;
  s.test_size = 8;
  const auto [train, test] = make_synthetic(s);
  std::vector<int> count(4, 0);
  for (int l : train.labels)
    ++count[static_cast<std::size_t>(l)];
  EXPECT_EQ(count, (std::vector<int>{10, 10, 10, 10}));
}

TEST(Synthetic, EncodeDecodeRoundTrip) {
  SyntheticSpec s;
  s.train_size = 30;
  s.test_size = 10;
  s.height = s.width = 8;
  const auto train = make_synthetic(s).first;
  auto [im, lb] = encode_idx(train);
  EXPECT_EQ(decode_idx(im, lb), train);
}

TEST(Normalization, TrainStatisticsReusedForTest) {
  DataConfig cfg;
  cfg.synthetic.train_size = 50;
  cfg.synthetic.test_size = 20;
  cfg.synthetic.height = cfg.synthetic.width = 6;
  const auto [train, test] = load_dataset(cfg);
  EXPECT_EQ(train.channel_mean, test.channel_mean);
  EXPECT_EQ(train.channel_std, test.channel_std);
  double mean = 0.0;
  for (double v : train.images.data())
    mean += v;
  EXPECT_NEAR(mean / double(train.images.size()), 0.0, 1e-9);
}

TEST(Normalization, OutOfRangeLabelRejected) {
  auto raw = random_raw(4, 1, 2, 2, 3, 5);
  raw.labels[2] = 7;
  EXPECT_TRUE(error_mentions([&] { split_of(raw, 3); }, "label 7"));
}

TEST(LoadDataset, IdxFilesFromDisk) {
  const auto train = random_raw(12, 1, 5, 5, 3, 6);
  const auto test = random_raw(6, 1, 5, 5, 3, 7);
  DataConfig cfg;
  cfg.format = "idx";
  cfg.num_classes = 3;
  cfg.train_images = tmp("pp_train_images.idx");
  cfg.train_labels = tmp("pp_train_labels.idx");
  cfg.test_images = tmp("pp_test_images.idx");
  cfg.test_labels = tmp("pp_test_labels.idx");
  auto [ti, tl] = encode_idx(train);
  auto [si, sl] = encode_idx(test);
  detail::write_file(cfg.train_images, ti);
  detail::write_file(cfg.train_labels, tl);
  detail::write_file(cfg.test_images, si);
  detail::write_file(cfg.test_labels, sl);
  const auto [a, b] = load_dataset(cfg);
  EXPECT_EQ(a.images.shape(), (Shape{12, 1, 5, 5}));
  EXPECT_EQ(b.images.shape(), (Shape{6, 1, 5, 5}));
  EXPECT_EQ(b.role, SplitRole::Test);
  for (const auto &p : {cfg.train_images, cfg.train_labels, cfg.test_images, cfg.test_labels})
    std::remove(p.c_str());
}

TEST(LoadDataset, MissingFileRejected) {
  DataConfig cfg;
  cfg.format = "cifar-binary";
  cfg.train_files = {tmp("pp_does_not_exist.bin")};
  cfg.test_file = cfg.train_files[0];
  EXPECT_THROW(load_dataset(cfg), Error);
}

TEST(ParseData, NamedFieldDiagnostics) {
  EXPECT_TRUE(error_mentions(
      [] { parse_data(ConfigDocument::parse("[data]\nformat = jpeg\n")); }, "data.format"));
  EXPECT_TRUE(error_mentions(
      [] { parse_data(ConfigDocument::parse("[data]\ntrain_size = many\n")); },
      "data.train_size"));
  const auto d = parse_data(ConfigDocument::parse(
      "[data]\nformat = cifar-binary\ntrain_files = a.bin, b.bin\ntest_file = t.bin\n"));
  EXPECT_EQ(d.train_files, (std::vector<std::string>{"a.bin", "b.bin"}));
}

// --- validation split -------------------------------------------------------

TEST(ValidationSplit, TenPerClassMovesHundred) {
  const auto train = split_of(random_raw(500, 1, 3, 3, 10, 8), 10);
  const auto [rest, val] = make_validation_split(train, 10, 1);
  EXPECT_EQ(val.size(), 100u);
  EXPECT_EQ(rest.size(), 400u);
  std::vector<int> count(10, 0);
  for (int l : val.labels)
    ++count[static_cast<std::size_t>(l)];
  for (int c : count)
    EXPECT_EQ(c, 10);
  EXPECT_EQ(val.role, SplitRole::Validation);
}

TEST(ValidationSplit, DisjointAndCovering) {
  const auto train = split_of(random_raw(60, 1, 2, 2, 3, 9), 3);
  const auto [rest, val] = make_validation_split(train, 5, 2);
  std::set<std::size_t> a(rest.source_index.begin(), rest.source_index.end());
  std::set<std::size_t> b(val.source_index.begin(), val.source_index.end());
  for (auto i : b)
    EXPECT_EQ(a.count(i), 0u);
  EXPECT_EQ(a.size() + b.size(), 60u);
  // images travel with their labels
  for (std::size_t k = 0; k < val.size(); ++k) {
    const auto src = val.source_index[k];
    EXPECT_EQ(val.labels[k], train.labels[src]);
    EXPECT_EQ(val.images[k * 4], train.images[src * 4]);
  }
}

TEST(ValidationSplit, BoundaryMovesWholeClass) {
  auto raw = random_raw(30, 1, 2, 2, 3, 10);
  // class 2 gets only 4 examples
  int moved = 0;
  for (auto &l : raw.labels)
    if (l == 2 && moved++ >= 4)
      l = 0;
  const auto train = split_of(raw, 3);
  const auto [rest, val] = make_validation_split(train, 4, 3);
  for (int l : rest.labels)
    EXPECT_NE(l, 2);
  EXPECT_EQ(val.size(), 12u);
}

TEST(ValidationSplit, TooSmallClassNamed) {
  auto raw = random_raw(30, 1, 2, 2, 3, 11);
  const auto train = split_of(raw, 3);
  EXPECT_TRUE(error_mentions([&] { make_validation_split(train, 11, 1); }, "class 0"));
  EXPECT_THROW(make_validation_split(train, 0, 1), Error);
}

TEST(ValidationSplit, SeedsChangeIndicesNotCounts) {
  const auto train = split_of(random_raw(200, 1, 2, 2, 4, 12), 4);
  const auto [r1, v1] = make_validation_split(train, 10, 1);
  const auto [r2, v2] = make_validation_split(train, 10, 2);
  const auto [r3, v3] = make_validation_split(train, 10, 1);
  EXPECT_NE(v1.source_index, v2.source_index);
  EXPECT_EQ(v1.source_index, v3.source_index);
  EXPECT_EQ(v1.size(), v2.size());
}
