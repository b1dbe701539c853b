#ifndef PLAYPRUNE_DATA_HPP
#define PLAYPRUNE_DATA_HPP

// Dataset ingestion: IDX (MNIST-style), CIFAR-10 binary and a seeded
// synthetic Gaussian-blob generator, plus per-class validation sampling.

#include "config.hpp"
#include "error.hpp"
#include "random.hpp"
#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace playprune {

/// Undecoded 8-bit images as stored on disk, channels-major per image.
struct RawImages {
  std::size_t channels = 1, height = 0, width = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;

  std::size_t count() const { return labels.size(); }
  std::size_t image_size() const { return channels * height * width; }
  bool operator==(const RawImages &) const = default;
};

enum class SplitRole { Train, Validation, Test };

inline const char *role_name(SplitRole r) {
  switch (r) {
  case SplitRole::Train: return "train";
  case SplitRole::Validation: return "validation";
  case SplitRole::Test: return "test";
  }
  return "?";
}

struct DatasetSplit {
  Tensor images; // [N,C,H,W], standardized
  std::vector<int> labels;
  std::size_t num_classes = 0;
  SplitRole role = SplitRole::Train;
  std::vector<double> channel_mean; // of [0,1]-scaled train pixels
  std::vector<double> channel_std;
  std::vector<std::size_t> source_index; // position in the loaded file

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return size() ? images.size() / size() : 0; }

  Tensor batch(std::span<const std::size_t> idx) const {
    PLAYPRUNE_CHECK(!idx.empty(), "empty batch");
    Shape shape = images.shape();
    shape[0] = idx.size();
    const std::size_t sz = image_size();
    std::vector<double> data(idx.size() * sz);
    for (std::size_t b = 0; b < idx.size(); ++b)
      std::copy_n(images.ptr() + idx[b] * sz, sz, data.begin() + b * sz);
    return Tensor(std::move(shape), std::move(data));
  }

  std::vector<int> batch_labels(std::span<const std::size_t> idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx)
      out.push_back(labels[i]);
    return out;
  }
};

// ---------------------------------------------------------------------------
// binary formats
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  PLAYPRUNE_CHECK(in.good(), "cannot open '", path, "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string &path,
                       const std::vector<std::uint8_t> &bytes) {
  std::ofstream out(path, std::ios::binary);
  PLAYPRUNE_CHECK(out.good(), "cannot write '", path, "'");
  out.write(reinterpret_cast<const char *>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t> &b,
                               std::size_t off, const std::string &what) {
  PLAYPRUNE_CHECK(off + 4 <= b.size(), what, ": truncated header at byte offset ",
                  off, " (file has ", b.size(), " bytes)");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

inline void put_be32(std::vector<std::uint8_t> &b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

} // namespace detail

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::size_t kCifarRecord = 1 + 3 * 32 * 32;

/// Parses an IDX image file (magic 0x00000803, dims N,H,W) and an IDX label
/// file (magic 0x00000801, dim N).
inline RawImages decode_idx(const std::vector<std::uint8_t> &images,
                            const std::vector<std::uint8_t> &labels) {
  const auto im_magic = detail::read_be32(images, 0, "idx images");
  PLAYPRUNE_CHECK(im_magic == kIdxImageMagic, "idx images: bad magic 0x",
                  std::hex, im_magic, " at byte offset 0, expected 0x00000803");
  const auto n = detail::read_be32(images, 4, "idx images");
  const auto h = detail::read_be32(images, 8, "idx images");
  const auto w = detail::read_be32(images, 12, "idx images");
  const std::size_t expect = 16 + std::size_t{n} * h * w;
  PLAYPRUNE_CHECK(images.size() == expect, "idx images: declared ", n, "x", h,
                  "x", w, " needs ", expect, " bytes, file has ", images.size(),
                  " (payload from byte offset 16)");

  const auto lb_magic = detail::read_be32(labels, 0, "idx labels");
  PLAYPRUNE_CHECK(lb_magic == kIdxLabelMagic, "idx labels: bad magic 0x",
                  std::hex, lb_magic, " at byte offset 0, expected 0x00000801");
  const auto ln = detail::read_be32(labels, 4, "idx labels");
  PLAYPRUNE_CHECK(ln == n, "idx labels: count ", ln,
                  " at byte offset 4 does not match image count ", n);
  PLAYPRUNE_CHECK(labels.size() == 8 + std::size_t{n}, "idx labels: declared ",
                  n, " labels needs ", 8 + std::size_t{n}, " bytes, file has ",
                  labels.size());

  RawImages raw;
  raw.channels = 1;
  raw.height = h;
  raw.width = w;
  raw.pixels.assign(images.begin() + 16, images.end());
  for (std::size_t i = 0; i < n; ++i)
    raw.labels.push_back(labels[8 + i]);
  return raw;
}

inline std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>>
encode_idx(const RawImages &raw) {
  PLAYPRUNE_CHECK(raw.channels == 1, "idx encoding supports one channel");
  std::vector<std::uint8_t> im, lb;
  detail::put_be32(im, kIdxImageMagic);
  detail::put_be32(im, static_cast<std::uint32_t>(raw.count()));
  detail::put_be32(im, static_cast<std::uint32_t>(raw.height));
  detail::put_be32(im, static_cast<std::uint32_t>(raw.width));
  im.insert(im.end(), raw.pixels.begin(), raw.pixels.end());
  detail::put_be32(lb, kIdxLabelMagic);
  detail::put_be32(lb, static_cast<std::uint32_t>(raw.count()));
  for (int l : raw.labels)
    lb.push_back(static_cast<std::uint8_t>(l));
  return {im, lb};
}

/// CIFAR-10 binary: records of 1 label byte + 3072 pixel bytes (R, G, B
/// planes of 32x32).
inline RawImages decode_cifar(const std::vector<std::uint8_t> &bytes) {
  PLAYPRUNE_CHECK(bytes.size() % kCifarRecord == 0, "cifar: file length ",
                  bytes.size(), " is not a multiple of ", kCifarRecord,
                  "; trailing partial record starts at byte offset ",
                  bytes.size() - bytes.size() % kCifarRecord);
  RawImages raw;
  raw.channels = 3;
  raw.height = 32;
  raw.width = 32;
  const std::size_t n = bytes.size() / kCifarRecord;
  raw.pixels.reserve(n * 3072);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = i * kCifarRecord;
    PLAYPRUNE_CHECK(bytes[off] < 10, "cifar: label ", int(bytes[off]),
                    " out of range at byte offset ", off);
    raw.labels.push_back(bytes[off]);
    raw.pixels.insert(raw.pixels.end(), bytes.begin() + off + 1,
                      bytes.begin() + off + kCifarRecord);
  }
  return raw;
}

inline std::vector<std::uint8_t> encode_cifar(const RawImages &raw) {
  PLAYPRUNE_CHECK(raw.channels == 3 && raw.height == 32 && raw.width == 32,
                  "cifar encoding needs 3x32x32 images");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < raw.count(); ++i) {
    out.push_back(static_cast<std::uint8_t>(raw.labels[i]));
    out.insert(out.end(), raw.pixels.begin() + i * 3072,
               raw.pixels.begin() + (i + 1) * 3072);
  }
  return out;
}

// ---------------------------------------------------------------------------
// synthetic data
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  std::uint64_t seed = 7;
  std::size_t classes = 10;
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t train_size = 5500;
  std::size_t test_size = 1000;
  double noise = 0.25;  // background pixel noise stddev, in [0,1] units
  double jitter = 2.0;  // blob centre displacement stddev, in pixels
  std::size_t blobs = 2; // Gaussian blobs per class prototype
};

namespace detail {

struct Blob {
  double cy, cx, sigma, amp;
  std::size_t channel;
};

inline void render(const SyntheticSpec &s, const std::vector<Blob> &proto,
                   Rng &rng, std::uint8_t *out) {
  std::vector<double> img(s.channels * s.height * s.width, 0.0);
  for (const auto &b : proto) {
    const double cy = b.cy + rng.normal(0.0, s.jitter);
    const double cx = b.cx + rng.normal(0.0, s.jitter);
    const double amp = b.amp * rng.uniform(0.6, 1.0);
    for (std::size_t y = 0; y < s.height; ++y)
      for (std::size_t x = 0; x < s.width; ++x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        img[(b.channel * s.height + y) * s.width + x] +=
            amp * std::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma));
      }
  }
  for (std::size_t k = 0; k < img.size(); ++k) {
    const double v = std::clamp(img[k] + rng.normal(0.0, s.noise), 0.0, 1.0);
    out[k] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
}

} // namespace detail

/// Class-conditional Gaussian-blob images: every class owns `blobs` blob
/// prototypes at random positions; each sample jitters positions and
/// amplitudes and adds pixel noise. Labels cycle through the classes so
/// every class is equally represented. Fully determined by `spec.seed`.
inline std::pair<RawImages, RawImages> make_synthetic(const SyntheticSpec &s) {
  PLAYPRUNE_CHECK(s.classes >= 2 && s.classes <= 256,
                  "synthetic: classes must lie in [2,256]");
  PLAYPRUNE_CHECK(s.channels >= 1 && s.height >= 4 && s.width >= 4,
                  "synthetic: geometry too small");
  Rng rng(s.seed);
  std::vector<std::vector<detail::Blob>> protos(s.classes);
  const double margin = 2.0;
  for (auto &p : protos)
    for (std::size_t b = 0; b < s.blobs; ++b)
      p.push_back({rng.uniform(margin, static_cast<double>(s.height) - margin),
                   rng.uniform(margin, static_cast<double>(s.width) - margin),
                   rng.uniform(1.2, 2.2), rng.uniform(0.7, 1.0),
                   static_cast<std::size_t>(rng.below(s.channels))});

  auto generate = [&](std::size_t n) {
    RawImages raw;
    raw.channels = s.channels;
    raw.height = s.height;
    raw.width = s.width;
    raw.pixels.resize(n * raw.image_size());
    for (std::size_t i = 0; i < n; ++i) {
      const int label = static_cast<int>(i % s.classes);
      raw.labels.push_back(label);
      detail::render(s, protos[static_cast<std::size_t>(label)], rng,
                     raw.pixels.data() + i * raw.image_size());
    }
    return raw;
  };
  auto train = generate(s.train_size);
  auto test = generate(s.test_size);
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// decoding and splits
// ---------------------------------------------------------------------------

struct ChannelStats {
  std::vector<double> mean, std;
};

inline ChannelStats channel_stats(const RawImages &raw) {
  PLAYPRUNE_CHECK(raw.count() > 0, "cannot compute statistics of an empty split");
  ChannelStats st{std::vector<double>(raw.channels, 0.0),
                  std::vector<double>(raw.channels, 0.0)};
  const std::size_t plane = raw.height * raw.width;
  const double count = static_cast<double>(raw.count() * plane);
  for (std::size_t c = 0; c < raw.channels; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < raw.count(); ++i) {
      const auto *p = raw.pixels.data() + i * raw.image_size() + c * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = p[k] / 255.0;
        sum += v;
        sq += v * v;
      }
    }
    st.mean[c] = sum / count;
    const double var = std::max(sq / count - st.mean[c] * st.mean[c], 0.0);
    st.std[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return st;
}

/// Scales pixels to [0,1] and standardizes each channel with `stats`.
inline DatasetSplit decode_split(const RawImages &raw, std::size_t num_classes,
                                 const ChannelStats &stats, SplitRole role) {
  PLAYPRUNE_CHECK(raw.count() > 0, "empty ", role_name(role), " split");
  PLAYPRUNE_CHECK(raw.pixels.size() == raw.count() * raw.image_size(),
                  role_name(role), " split: pixel buffer length mismatch");
  DatasetSplit s;
  s.images = Tensor({raw.count(), raw.channels, raw.height, raw.width});
  const std::size_t plane = raw.height * raw.width;
  for (std::size_t i = 0; i < raw.count(); ++i)
    for (std::size_t c = 0; c < raw.channels; ++c)
      for (std::size_t k = 0; k < plane; ++k) {
        const std::size_t idx = i * raw.image_size() + c * plane + k;
        s.images[idx] = (raw.pixels[idx] / 255.0 - stats.mean[c]) / stats.std[c];
      }
  for (std::size_t i = 0; i < raw.count(); ++i) {
    PLAYPRUNE_CHECK(raw.labels[i] >= 0 &&
                        static_cast<std::size_t>(raw.labels[i]) < num_classes,
                    role_name(role), " split: label ", raw.labels[i],
                    " of example ", i, " out of range [0,", num_classes, ")");
    s.source_index.push_back(i);
  }
  s.labels = raw.labels;
  s.num_classes = num_classes;
  s.role = role;
  s.channel_mean = stats.mean;
  s.channel_std = stats.std;
  return s;
}

/// Subset of `src` at positions `idx`, in that order.
inline DatasetSplit select(const DatasetSplit &src,
                           const std::vector<std::size_t> &idx, SplitRole role) {
  DatasetSplit s;
  s.images = src.batch(idx);
  s.labels = src.batch_labels(idx);
  s.num_classes = src.num_classes;
  s.role = role;
  s.channel_mean = src.channel_mean;
  s.channel_std = src.channel_std;
  for (auto i : idx)
    s.source_index.push_back(src.source_index[i]);
  return s;
}

/// Moves `per_class` randomly chosen examples of every class from `train`
/// into a new validation split. Remaining train examples keep their order.
inline std::pair<DatasetSplit, DatasetSplit>
make_validation_split(const DatasetSplit &train, std::size_t per_class,
                      std::uint64_t seed) {
  PLAYPRUNE_CHECK(per_class >= 1, "validation per_class must be positive");
  std::vector<std::vector<std::size_t>> by_class(train.num_classes);
  for (std::size_t i = 0; i < train.size(); ++i)
    by_class[static_cast<std::size_t>(train.labels[i])].push_back(i);
  Rng rng(seed);
  std::vector<bool> to_val(train.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    PLAYPRUNE_CHECK(by_class[c].size() >= per_class, "validation split: class ",
                    c, " has ", by_class[c].size(),
                    " examples, fewer than per_class=", per_class);
    auto pool = by_class[c];
    rng.shuffle(pool);
    for (std::size_t k = 0; k < per_class; ++k)
      to_val[pool[k]] = true;
  }
  std::vector<std::size_t> keep, val;
  for (std::size_t i = 0; i < train.size(); ++i)
    (to_val[i] ? val : keep).push_back(i);
  return {select(train, keep, SplitRole::Train),
          select(train, val, SplitRole::Validation)};
}

struct DataConfig {
  std::string format = "synthetic"; // synthetic | idx | cifar-binary
  SyntheticSpec synthetic;
  std::string train_images, train_labels, test_images, test_labels; // idx
  std::vector<std::string> train_files;                              // cifar
  std::string test_file;                                             // cifar
  std::size_t num_classes = 10;
  std::size_t val_per_class = 50;
  std::uint64_t split_seed = 7; // validation carve-out; data.seed sets both
  std::size_t train_limit = 0; // 0 = all
};

inline DataConfig parse_data(const ConfigDocument &doc) {
  DataConfig d;
  auto str = [&](const char *k, std::string &dst) {
    if (auto v = doc.get("data", k))
      dst = *v;
  };
  auto size = [&](const char *k, std::size_t &dst) {
    if (auto v = doc.get("data", k))
      dst = parse_size(std::string("data.") + k, *v);
  };
  auto real = [&](const char *k, double &dst) {
    if (auto v = doc.get("data", k))
      dst = parse_double(std::string("data.") + k, *v);
  };
  str("format", d.format);
  PLAYPRUNE_CHECK(d.format == "synthetic" || d.format == "idx" ||
                      d.format == "cifar-binary",
                  "data.format must be synthetic, idx or cifar-binary, got '",
                  d.format, "'");
  if (auto v = doc.get("data", "seed"))
    d.synthetic.seed = d.split_seed =
        static_cast<std::uint64_t>(parse_size("data.seed", *v));
  size("classes", d.synthetic.classes);
  size("channels", d.synthetic.channels);
  size("height", d.synthetic.height);
  size("width", d.synthetic.width);
  size("train_size", d.synthetic.train_size);
  size("test_size", d.synthetic.test_size);
  size("blobs", d.synthetic.blobs);
  real("noise", d.synthetic.noise);
  real("jitter", d.synthetic.jitter);
  str("train_images", d.train_images);
  str("train_labels", d.train_labels);
  str("test_images", d.test_images);
  str("test_labels", d.test_labels);
  str("test_file", d.test_file);
  if (auto v = doc.get("data", "train_files")) {
    std::string tok;
    std::istringstream is(*v);
    while (std::getline(is, tok, ','))
      if (!detail::trim(tok).empty())
        d.train_files.push_back(detail::trim(tok));
  }
  d.num_classes = d.format == "synthetic" ? d.synthetic.classes : 10;
  size("num_classes", d.num_classes);
  size("val_per_class", d.val_per_class);
  size("train_limit", d.train_limit);
  return d;
}

/// Loads train and test splits, standardized with train-file statistics.
inline std::pair<DatasetSplit, DatasetSplit> load_dataset(const DataConfig &cfg) {
  RawImages train, test;
  if (cfg.format == "synthetic") {
    std::tie(train, test) = make_synthetic(cfg.synthetic);
  } else if (cfg.format == "idx") {
    train = decode_idx(detail::read_file(cfg.train_images),
                       detail::read_file(cfg.train_labels));
    test = decode_idx(detail::read_file(cfg.test_images),
                      detail::read_file(cfg.test_labels));
  } else {
    PLAYPRUNE_CHECK(!cfg.train_files.empty(), "data.train_files is empty");
    for (const auto &f : cfg.train_files) {
      auto part = decode_cifar(detail::read_file(f));
      train.channels = part.channels;
      train.height = part.height;
      train.width = part.width;
      train.pixels.insert(train.pixels.end(), part.pixels.begin(), part.pixels.end());
      train.labels.insert(train.labels.end(), part.labels.begin(), part.labels.end());
    }
    test = decode_cifar(detail::read_file(cfg.test_file));
  }
  if (cfg.train_limit && cfg.train_limit < train.count()) {
    train.labels.resize(cfg.train_limit);
    train.pixels.resize(cfg.train_limit * train.image_size());
  }
  const auto stats = channel_stats(train);
  return {decode_split(train, cfg.num_classes, stats, SplitRole::Train),
          decode_split(test, cfg.num_classes, stats, SplitRole::Test)};
}

} // namespace playprune

#endif // PLAYPRUNE_DATA_HPP
