#ifndef PLAYPRUNE_CHECKPOINT_HPP
#define PLAYPRUNE_CHECKPOINT_HPP

// Binary checkpoint container. All integers are little-endian u64 (or u8
// for flags/kinds), doubles are little-endian IEEE-754 binary64.
//
//   "PPCKPT\0\1"                      8-byte magic (format version 1)
//   input shape                       u64 rank, u64 dims...
//   u64 layer count, then per layer:
//     u8 kind, str name, u64 kernel, u64 stride, u64 pad, u8 prunable,
//     6 tensors (weight, bias, gamma, beta, running_mean, running_var),
//     each as u64 rank, u64 dims..., f64 data... (rank 0 = absent)
//   u8 has_controller, then ControllerState fields when set
//   str rng_state
//   str metadata                      free-form (JSON in practice)
//   u64 FNV-1a 64 of every preceding byte
//
// str = u64 byte length followed by the bytes.

#include "model.hpp"
#include "prc.hpp"
#include "random.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

namespace playprune {

inline std::uint64_t fnv1a64(const std::uint8_t *p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline constexpr std::uint8_t kCheckpointMagic[8] = {'P', 'P', 'C', 'K',
                                                     'P', 'T', 0, 1};

class ByteWriter {
public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string &s) {
    u64(s.size());
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void shape(const Shape &s) {
    u64(s.size());
    for (auto d : s)
      u64(d);
  }
  void tensor(const Tensor &t) {
    shape(t.shape());
    for (double v : t.data())
      f64(v);
  }
  void f64s(const std::vector<double> &v) {
    u64(v.size());
    for (double x : v)
      f64(x);
  }
  void u64s(const std::vector<std::size_t> &v) {
    u64(v.size());
    for (auto x : v)
      u64(x);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }
  const std::vector<std::uint8_t> &bytes() const { return out_; }

private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
  ByteReader(const std::uint8_t *p, std::size_t n) : p_(p), n_(n) {}

  std::uint8_t u8() {
    need(1);
    return p_[pos_++];
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= std::uint64_t{p_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(reinterpret_cast<const char *>(p_ + pos_), n);
    pos_ += n;
    return s;
  }
  Shape shape() {
    const auto r = u64();
    PLAYPRUNE_CHECK(r <= 8, "checkpoint: implausible tensor rank ", r,
                    " at byte offset ", pos_ - 8);
    Shape s;
    for (std::uint64_t i = 0; i < r; ++i)
      s.push_back(u64());
    return s;
  }
  Tensor tensor() {
    const auto s = shape();
    if (s.empty())
      return {};
    const auto n = shape_size(s);
    need(n * 8);
    std::vector<double> data(n);
    for (auto &v : data)
      v = f64();
    return Tensor(s, std::move(data));
  }
  std::vector<double> f64s() {
    const auto n = u64();
    need(n * 8);
    std::vector<double> v(n);
    for (auto &x : v)
      x = f64();
    return v;
  }
  std::vector<std::size_t> u64s() {
    const auto n = u64();
    need(n * 8);
    std::vector<std::size_t> v(n);
    for (auto &x : v)
      x = u64();
    return v;
  }
  std::size_t position() const { return pos_; }

private:
  void need(std::uint64_t k) const {
    PLAYPRUNE_CHECK(k <= n_ - pos_, "checkpoint: truncated at byte offset ",
                    pos_, " (need ", k, " more bytes)");
  }
  const std::uint8_t *p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

} // namespace detail

/// Immutable serialized snapshot plus its content hash.
struct Checkpoint {
  std::vector<std::uint8_t> bytes;

  std::uint64_t hash() const {
    PLAYPRUNE_CHECK(bytes.size() >= 8, "checkpoint: empty");
    std::uint64_t h = 0;
    for (int i = 0; i < 8; ++i)
      h |= std::uint64_t{bytes[bytes.size() - 8 + static_cast<std::size_t>(i)]}
           << (8 * i);
    return h;
  }

  void write(const std::string &path) const {
    std::ofstream out(path, std::ios::binary);
    PLAYPRUNE_CHECK(out.good(), "cannot write checkpoint '", path, "'");
    out.write(reinterpret_cast<const char *>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    PLAYPRUNE_CHECK(out.good(), "failed writing checkpoint '", path, "'");
  }

  static Checkpoint read(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    PLAYPRUNE_CHECK(in.good(), "cannot open checkpoint '", path, "'");
    return {{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()}};
  }
};

struct CheckpointContents {
  NetworkModel model;
  std::optional<ControllerState> controller;
  std::string rng_state;
  std::string metadata;
};

/// Hash of the model's architecture and parameter bytes alone.
inline std::uint64_t model_hash(const NetworkModel &model);

inline Checkpoint checkpoint_save(const NetworkModel &model,
                                  const ControllerState *controller = nullptr,
                                  const Rng *rng = nullptr,
                                  const std::string &metadata = {}) {
  detail::ByteWriter w;
  for (auto b : detail::kCheckpointMagic)
    w.u8(b);
  w.shape(model.input_shape());
  w.u64(model.size());
  for (const auto &l : model.layers()) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.str(l.name);
    w.u64(l.kernel);
    w.u64(l.stride);
    w.u64(l.pad);
    w.u8(l.prunable ? 1 : 0);
    for (const Tensor *t : {&l.weight, &l.bias, &l.gamma, &l.beta,
                            &l.running_mean, &l.running_var})
      w.tensor(*t);
  }
  w.u8(controller ? 1 : 0);
  if (controller) {
    const auto &c = *controller;
    for (double v : {c.baseline, c.epsilon, c.lambda, c.lambda_A, c.delta_w, c.gap})
      w.f64(v);
    w.u64s(c.W.layers);
    w.f64s(c.W.values);
    w.u64(c.recovery_patience);
    w.u64(c.recovery_epochs);
    w.f64s(c.history);
    w.u8(c.last_good_accuracy ? 1 : 0);
    w.f64(c.last_good_accuracy.value_or(0.0));
    w.u8(c.last_good_epoch ? 1 : 0);
    w.u64(c.last_good_epoch.value_or(0));
  }
  w.str(rng ? rng->state() : std::string{});
  w.str(metadata);
  auto bytes = w.take();
  const auto h = fnv1a64(bytes.data(), bytes.size());
  for (int i = 0; i < 8; ++i)
    bytes.push_back(static_cast<std::uint8_t>(h >> (8 * i)));
  return {std::move(bytes)};
}

/// Verifies the trailing hash, then decodes. Any corruption is rejected.
inline CheckpointContents checkpoint_restore(const Checkpoint &ck) {
  const auto &b = ck.bytes;
  PLAYPRUNE_CHECK(b.size() >= 16, "checkpoint: file too short (", b.size(),
                  " bytes)");
  const auto stored = ck.hash();
  const auto actual = fnv1a64(b.data(), b.size() - 8);
  PLAYPRUNE_CHECK(stored == actual, "checkpoint: content hash mismatch (stored ",
                  std::hex, stored, ", computed ", actual, ")");
  PLAYPRUNE_CHECK(std::memcmp(b.data(), detail::kCheckpointMagic, 8) == 0,
                  "checkpoint: bad magic at byte offset 0");

  detail::ByteReader r(b.data() + 8, b.size() - 16);
  CheckpointContents out;
  const Shape input = r.shape();
  const auto count = r.u64();
  std::vector<LayerSpec> layers;
  for (std::uint64_t i = 0; i < count; ++i) {
    LayerSpec l;
    const auto kind = r.u8();
    PLAYPRUNE_CHECK(kind <= static_cast<std::uint8_t>(LayerKind::BlockEnd),
                    "checkpoint: unknown layer kind ", int(kind));
    l.kind = static_cast<LayerKind>(kind);
    l.name = r.str();
    l.kernel = r.u64();
    l.stride = r.u64();
    l.pad = r.u64();
    l.prunable = r.u8() != 0;
    for (Tensor *t : {&l.weight, &l.bias, &l.gamma, &l.beta, &l.running_mean,
                      &l.running_var})
      *t = r.tensor();
    layers.push_back(std::move(l));
  }
  out.model = NetworkModel(input, std::move(layers));
  if (r.u8()) {
    ControllerState c;
    for (double *v : {&c.baseline, &c.epsilon, &c.lambda, &c.lambda_A,
                      &c.delta_w, &c.gap})
      *v = r.f64();
    c.W.layers = r.u64s();
    c.W.values = r.f64s();
    c.recovery_patience = r.u64();
    c.recovery_epochs = r.u64();
    c.history = r.f64s();
    const bool has_acc = r.u8();
    const double acc = r.f64();
    if (has_acc)
      c.last_good_accuracy = acc;
    const bool has_epoch = r.u8();
    const auto ep = r.u64();
    if (has_epoch)
      c.last_good_epoch = ep;
    out.controller = std::move(c);
  }
  out.rng_state = r.str();
  out.metadata = r.str();
  PLAYPRUNE_CHECK(r.position() == b.size() - 16,
                  "checkpoint: trailing bytes after payload");
  return out;
}

inline std::uint64_t model_hash(const NetworkModel &model) {
  const auto ck = checkpoint_save(model);
  return ck.hash();
}

} // namespace playprune

#endif // PLAYPRUNE_CHECKPOINT_HPP
