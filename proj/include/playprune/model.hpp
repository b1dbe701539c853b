#ifndef PLAYPRUNE_MODEL_HPP
#define PLAYPRUNE_MODEL_HPP

#include "config.hpp"
#include "error.hpp"
#include "layers.hpp"
#include "random.hpp"
#include "tensor.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace playprune {

enum class LayerKind { Conv, Dense, BatchNorm, Relu, MaxPool, BlockBegin, BlockEnd };

inline const char *kind_name(LayerKind k) {
  switch (k) {
  case LayerKind::Conv: return "conv";
  case LayerKind::Dense: return "dense";
  case LayerKind::BatchNorm: return "batchnorm";
  case LayerKind::Relu: return "relu";
  case LayerKind::MaxPool: return "maxpool";
  case LayerKind::BlockBegin: return "block_begin";
  case LayerKind::BlockEnd: return "block_end";
  }
  return "?";
}

inline LayerKind parse_kind(const std::string &s) {
  for (auto k : {LayerKind::Conv, LayerKind::Dense, LayerKind::BatchNorm,
                 LayerKind::Relu, LayerKind::MaxPool, LayerKind::BlockBegin,
                 LayerKind::BlockEnd})
    if (s == kind_name(k))
      return k;
  detail::fail("unknown layer kind '", s, "'");
}

/// Architecture-level description of one layer, before parameters exist.
struct LayerDesc {
  LayerKind kind = LayerKind::Relu;
  std::string name;
  std::size_t units = 0; // conv filters or dense outputs
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::optional<bool> prunable; // unset: decided by the eligibility rule
};

struct ArchConfig {
  std::size_t in_channels = 1;
  std::size_t in_height = 28;
  std::size_t in_width = 28;
  std::vector<LayerDesc> layers;

  Shape input_shape() const { return {in_channels, in_height, in_width}; }
};

/// Reads the [architecture] section:
///   input = CxHxW
///   layer = conv filters=16 kernel=3 stride=1 pad=1 [prunable=0] [name=..]
///   layer = batchnorm | relu | maxpool | block_begin | block_end
///   layer = dense units=10
inline ArchConfig parse_architecture(const ConfigDocument &doc) {
  ArchConfig arch;
  const auto input = doc.get("architecture", "input");
  PLAYPRUNE_CHECK(input.has_value(), "architecture.input is required");
  {
    std::vector<std::size_t> dims;
    std::string tok;
    std::istringstream is(*input);
    while (std::getline(is, tok, 'x'))
      dims.push_back(parse_size("architecture.input", detail::trim(tok)));
    PLAYPRUNE_CHECK(dims.size() == 3 && dims[0] && dims[1] && dims[2],
                    "architecture.input must be CxHxW with positive extents, got '",
                    *input, "'");
    arch.in_channels = dims[0];
    arch.in_height = dims[1];
    arch.in_width = dims[2];
  }
  for (const auto &line : doc.get_all("architecture", "layer")) {
    const auto toks = detail::split_ws(line);
    PLAYPRUNE_CHECK(!toks.empty(), "architecture.layer: empty layer entry");
    LayerDesc d;
    d.kind = parse_kind(toks[0]);
    for (std::size_t i = 1; i < toks.size(); ++i) {
      const auto eq = toks[i].find('=');
      PLAYPRUNE_CHECK(eq != std::string::npos, "architecture.layer '", line,
                      "': expected key=value, got '", toks[i], "'");
      const std::string k = toks[i].substr(0, eq), v = toks[i].substr(eq + 1);
      const std::string field = "architecture.layer." + k;
      if (k == "filters" || k == "units")
        d.units = parse_size(field, v);
      else if (k == "kernel")
        d.kernel = parse_size(field, v);
      else if (k == "stride")
        d.stride = parse_size(field, v);
      else if (k == "pad")
        d.pad = parse_size(field, v);
      else if (k == "prunable")
        d.prunable = parse_bool(field, v);
      else if (k == "name")
        d.name = v;
      else
        detail::fail("architecture.layer '", line, "': unknown attribute '", k,
                     "'");
    }
    arch.layers.push_back(std::move(d));
  }
  return arch;
}

/// One layer with its parameters. Conv weights are [F,C,kh,kw], dense
/// weights [O,D]; batchnorm keeps gamma, beta and running statistics.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::string name;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool prunable = false;
  Tensor weight;
  Tensor bias;
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;

  /// Filter count (conv), output width (dense) or channel count (batchnorm).
  std::size_t units() const {
    switch (kind) {
    case LayerKind::Conv:
    case LayerKind::Dense: return weight.dim(0);
    case LayerKind::BatchNorm: return gamma.size();
    default: return 0;
    }
  }
  bool is_conv() const { return kind == LayerKind::Conv; }

  bool operator==(const LayerSpec &) const = default;
};

/// Channel-coupling of a prunable conv: the batchnorm layers normalizing its
/// output and the single conv or dense layer consuming it. For a dense
/// consumer every channel owns `spatial` consecutive input columns.
struct ConvDependency {
  std::size_t producer = 0;
  std::vector<std::size_t> batchnorms;
  std::size_t consumer = 0;
  std::size_t spatial = 1;
};

/// Saved intermediates of the last forward pass, one slot per layer.
struct LayerCache {
  std::optional<Conv2dCache> conv;
  std::optional<DenseCache> dense;
  std::optional<BatchNormCache> bn;
  std::optional<MaxPoolCache> pool;
  Tensor relu_input;
  Shape pre_flatten;
};

struct ActivationCache {
  std::vector<LayerCache> layers;
  bool valid = false;
};

class NetworkModel {
public:
  NetworkModel() = default;
  NetworkModel(Shape input_shape, std::vector<LayerSpec> layers)
      : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    validate();
  }

  const Shape &input_shape() const { return input_shape_; }
  const std::vector<LayerSpec> &layers() const { return layers_; }
  std::vector<LayerSpec> &mutable_layers() { return layers_; }
  const LayerSpec &layer(std::size_t i) const { return layers_.at(i); }
  LayerSpec &layer(std::size_t i) { return layers_.at(i); }
  std::size_t size() const { return layers_.size(); }

  std::vector<std::size_t> conv_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].is_conv())
        out.push_back(i);
    return out;
  }

  std::vector<std::size_t> prunable_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].is_conv() && layers_[i].prunable)
        out.push_back(i);
    return out;
  }

  std::size_t num_classes() const {
    PLAYPRUNE_CHECK(!layers_.empty() && layers_.back().kind == LayerKind::Dense,
                    "model has no classifier");
    return layers_.back().units();
  }

  /// Per-sample activation shape after each layer (rank 3 [C,H,W] for
  /// spatial layers, rank 1 [D] for dense).
  std::vector<Shape> output_shapes() const {
    std::vector<Shape> out;
    Shape cur = input_shape_;
    std::vector<Shape> skips;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto &l = layers_[i];
      switch (l.kind) {
      case LayerKind::Conv: {
        PLAYPRUNE_CHECK(cur.size() == 3, "layer ", i, " (conv) follows a dense layer");
        PLAYPRUNE_CHECK(l.weight.dim(1) == cur[0], "layer ", i,
                        " (conv): weight expects C=", l.weight.dim(1),
                        " but receives C=", cur[0]);
        const auto g = conv_geometry({1, cur[0], cur[1], cur[2]},
                                     l.weight.shape(), l.stride, l.pad);
        cur = {g.f, g.oh, g.ow};
        break;
      }
      case LayerKind::Dense: {
        const std::size_t d = shape_size(cur);
        PLAYPRUNE_CHECK(l.weight.dim(1) == d, "layer ", i,
                        " (dense): weight expects D=", l.weight.dim(1),
                        " but receives D=", d);
        cur = {l.weight.dim(0)};
        break;
      }
      case LayerKind::BatchNorm:
        PLAYPRUNE_CHECK(cur.size() == 3 && l.gamma.size() == cur[0], "layer ", i,
                        " (batchnorm): channel count ", l.gamma.size(),
                        " does not match producer channels");
        break;
      case LayerKind::Relu: break;
      case LayerKind::MaxPool:
        PLAYPRUNE_CHECK(cur.size() == 3 && cur[1] >= 2 && cur[2] >= 2, "layer ", i,
                        " (maxpool): needs spatial input of at least 2x2");
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      case LayerKind::BlockBegin:
        PLAYPRUNE_CHECK(skips.empty(), "layer ", i, ": nested residual blocks are not supported");
        PLAYPRUNE_CHECK(cur.size() == 3, "layer ", i, ": block_begin after dense layer");
        skips.push_back(cur);
        break;
      case LayerKind::BlockEnd:
        PLAYPRUNE_CHECK(!skips.empty(), "layer ", i, ": block_end without block_begin");
        PLAYPRUNE_CHECK(skips.back() == cur, "layer ", i,
                        ": residual shapes differ, skip ", shape_string(skips.back()),
                        " vs block output ", shape_string(cur));
        skips.pop_back();
        break;
      }
      out.push_back(cur);
    }
    PLAYPRUNE_CHECK(skips.empty(), "unterminated residual block");
    return out;
  }

  /// Coupled layers of conv `i`, or nullopt when its output reaches a
  /// residual junction (or nothing) before being consumed.
  std::optional<ConvDependency> dependency(std::size_t i) const {
    PLAYPRUNE_CHECK(i < layers_.size() && layers_[i].is_conv(), "layer ", i,
                    " is not a conv layer");
    ConvDependency dep;
    dep.producer = i;
    const auto shapes = output_shapes();
    for (std::size_t j = i + 1; j < layers_.size(); ++j) {
      switch (layers_[j].kind) {
      case LayerKind::BatchNorm: dep.batchnorms.push_back(j); break;
      case LayerKind::Relu:
      case LayerKind::MaxPool: break;
      case LayerKind::Conv:
        dep.consumer = j;
        return dep;
      case LayerKind::Dense:
        dep.consumer = j;
        dep.spatial = shape_size(shapes[j - 1]) / shapes[i][0];
        return dep;
      case LayerKind::BlockBegin:
      case LayerKind::BlockEnd: return std::nullopt;
      }
    }
    return std::nullopt;
  }

  /// All producer -> consumer edges of prunable convs.
  std::vector<ConvDependency> dependencies() const {
    std::vector<ConvDependency> out;
    for (auto i : prunable_layers())
      out.push_back(*dependency(i));
    return out;
  }

  std::vector<Tensor *> parameters() {
    std::vector<Tensor *> out;
    for (auto &l : layers_) {
      if (l.kind == LayerKind::Conv || l.kind == LayerKind::Dense) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
      } else if (l.kind == LayerKind::BatchNorm) {
        out.push_back(&l.gamma);
        out.push_back(&l.beta);
      }
    }
    return out;
  }

  void zero_grad() {
    for (auto *p : parameters()) {
      p->ensure_grad();
      p->zero_grad();
    }
  }

  /// Logits [N, classes] for a batch [N,C,H,W].
  Tensor forward(const Tensor &input, Mode mode,
                 ActivationCache *cache = nullptr) {
    PLAYPRUNE_CHECK(input.rank() == 4 &&
                        Shape(input.shape().begin() + 1, input.shape().end()) ==
                            input_shape_,
                    "model input ", shape_string(input.shape()),
                    " does not match [N,", shape_string(input_shape_), "]");
    if (cache) {
      cache->layers.assign(layers_.size(), {});
      cache->valid = true;
    }
    Tensor x = input;
    std::vector<Tensor> skips;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto &l = layers_[i];
      LayerCache *lc = cache ? &cache->layers[i] : nullptr;
      switch (l.kind) {
      case LayerKind::Conv: {
        Conv2dCache cc;
        x = conv2d_forward(x, l.weight, l.bias, l.stride, l.pad, lc ? &cc : nullptr);
        if (lc)
          lc->conv = std::move(cc);
        break;
      }
      case LayerKind::Dense: {
        if (x.rank() != 2) {
          if (lc)
            lc->pre_flatten = x.shape();
          const std::size_t n = x.dim(0);
          x = x.reshaped({n, x.size() / n});
        }
        DenseCache dc;
        x = dense_forward(x, l.weight, l.bias, lc ? &dc : nullptr);
        if (lc)
          lc->dense = std::move(dc);
        break;
      }
      case LayerKind::BatchNorm: {
        BatchNormCache bc;
        x = batchnorm_forward(x, l.gamma, l.beta, l.running_mean, l.running_var,
                              mode, {}, lc ? &bc : nullptr);
        if (lc)
          lc->bn = std::move(bc);
        break;
      }
      case LayerKind::Relu:
        if (lc)
          lc->relu_input = x;
        x = relu_forward(x);
        break;
      case LayerKind::MaxPool: {
        MaxPoolCache pc;
        x = maxpool_forward(x, lc ? &pc : nullptr);
        if (lc)
          lc->pool = std::move(pc);
        break;
      }
      case LayerKind::BlockBegin: skips.push_back(x); break;
      case LayerKind::BlockEnd: {
        PLAYPRUNE_CHECK(!skips.empty() && skips.back().shape() == x.shape(),
                        "residual junction shape mismatch at layer ", i);
        auto d = x.data();
        auto s = skips.back().data();
        for (std::size_t k = 0; k < d.size(); ++k)
          d[k] += s[k];
        skips.pop_back();
        break;
      }
      }
    }
    return x;
  }

  /// Accumulates parameter gradients (into each tensor's grad buffer) for
  /// the cotangent `grad_logits`; returns the gradient w.r.t. the input.
  Tensor backward(const ActivationCache &cache, const Tensor &grad_logits) {
    PLAYPRUNE_CHECK(cache.valid && cache.layers.size() == layers_.size(),
                    "backward: no matching forward cache");
    Tensor g = grad_logits;
    std::vector<Tensor> skip_grads;
    for (std::size_t r = layers_.size(); r-- > 0;) {
      auto &l = layers_[r];
      const auto &lc = cache.layers[r];
      switch (l.kind) {
      case LayerKind::Conv: {
        auto gr = conv2d_backward(lc.conv, l.weight, g);
        accumulate(l.weight, gr.weights);
        accumulate(l.bias, gr.bias);
        g = std::move(gr.input);
        break;
      }
      case LayerKind::Dense: {
        auto gr = dense_backward(lc.dense, l.weight, g);
        accumulate(l.weight, gr.weights);
        accumulate(l.bias, gr.bias);
        g = lc.pre_flatten.empty() ? std::move(gr.input)
                                   : gr.input.reshaped(lc.pre_flatten);
        break;
      }
      case LayerKind::BatchNorm: {
        auto gr = batchnorm_backward(lc.bn, l.gamma, g);
        accumulate(l.gamma, gr.gamma);
        accumulate(l.beta, gr.beta);
        g = std::move(gr.input);
        break;
      }
      case LayerKind::Relu: g = relu_backward(lc.relu_input, g); break;
      case LayerKind::MaxPool: g = maxpool_backward(lc.pool, g); break;
      case LayerKind::BlockEnd: skip_grads.push_back(g); break;
      case LayerKind::BlockBegin: {
        auto d = g.data();
        auto s = skip_grads.back().data();
        for (std::size_t k = 0; k < d.size(); ++k)
          d[k] += s[k];
        skip_grads.pop_back();
        break;
      }
      }
    }
    return g;
  }

  bool operator==(const NetworkModel &) const = default;

private:
  static void accumulate(Tensor &param, const Tensor &g) {
    param.ensure_grad();
    auto dst = param.grad();
    auto src = g.data();
    for (std::size_t k = 0; k < dst.size(); ++k)
      dst[k] += src[k];
  }

  void validate() const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto &l = layers_[i];
      if (l.kind == LayerKind::Conv) {
        PLAYPRUNE_CHECK(l.weight.rank() == 4 && l.weight.dim(0) >= 1, "layer ",
                        i, " (conv) must have at least one filter");
        PLAYPRUNE_CHECK(l.bias.size() == l.weight.dim(0), "layer ", i,
                        " (conv): bias length mismatch");
      }
      if (l.kind == LayerKind::BatchNorm) {
        bool has_producer = false;
        for (std::size_t j = 0; j < i; ++j)
          has_producer |= layers_[j].is_conv();
        PLAYPRUNE_CHECK(has_producer, "layer ", i,
                        " (batchnorm): dangling dependency, no conv produces its channels");
      }
      if (l.is_conv() && l.prunable)
        PLAYPRUNE_CHECK(dependency(i).has_value(), "layer ", i,
                        " (conv) is marked prunable but its output feeds a residual junction");
    }
    (void)output_shapes();
  }

  Shape input_shape_;
  std::vector<LayerSpec> layers_;
};

/// Instantiates an architecture with He-normal conv/dense weights, zero
/// biases and identity batchnorm. Prune eligibility: every conv whose
/// output is consumed by exactly one conv or dense layer before any
/// residual junction is eligible; the last conv of a residual block (and
/// any conv feeding a skip connection) is not. An explicit `prunable=0`
/// in the description can only remove eligibility. `Init::Zero` skips the
/// random draw (shape-only uses such as accounting).
enum class Init { HeNormal, Zero };

inline NetworkModel build_model(const ArchConfig &arch, Rng &rng,
                                Init init = Init::HeNormal) {
  std::vector<LayerSpec> layers;
  Shape cur = arch.input_shape();
  bool seen_conv = false;
  std::size_t conv_count = 0, dense_count = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto &d = arch.layers[i];
    LayerSpec l;
    l.kind = d.kind;
    l.name = d.name;
    switch (d.kind) {
    case LayerKind::Conv: {
      PLAYPRUNE_CHECK(cur.size() == 3, "layer ", i, ": conv after dense layer");
      PLAYPRUNE_CHECK(d.units >= 1, "layer ", i, ": conv needs filters >= 1");
      PLAYPRUNE_CHECK(d.kernel >= 1 && d.stride >= 1, "layer ", i,
                      ": conv kernel and stride must be positive");
      l.kernel = d.kernel;
      l.stride = d.stride;
      l.pad = d.pad;
      l.weight = Tensor({d.units, cur[0], d.kernel, d.kernel});
      l.bias = Tensor({d.units});
      const double std = std::sqrt(2.0 / static_cast<double>(cur[0] * d.kernel * d.kernel));
      if (init == Init::HeNormal)
        for (auto &w : l.weight.data())
          w = rng.normal(0.0, std);
      const auto g = conv_geometry({1, cur[0], cur[1], cur[2]}, l.weight.shape(),
                                   d.stride, d.pad);
      cur = {d.units, g.oh, g.ow};
      seen_conv = true;
      if (l.name.empty())
        l.name = "conv" + std::to_string(++conv_count);
      break;
    }
    case LayerKind::Dense: {
      PLAYPRUNE_CHECK(d.units >= 1, "layer ", i, ": dense needs units >= 1");
      const std::size_t in = shape_size(cur);
      l.weight = Tensor({d.units, in});
      l.bias = Tensor({d.units});
      const double std = std::sqrt(2.0 / static_cast<double>(in));
      if (init == Init::HeNormal)
        for (auto &w : l.weight.data())
          w = rng.normal(0.0, std);
      cur = {d.units};
      if (l.name.empty())
        l.name = "fc" + std::to_string(++dense_count);
      break;
    }
    case LayerKind::BatchNorm:
      PLAYPRUNE_CHECK(seen_conv && cur.size() == 3, "layer ", i,
                      ": dangling dependency, batchnorm has no conv producer");
      l.gamma = Tensor({cur[0]}, 1.0);
      l.beta = Tensor({cur[0]});
      l.running_mean = Tensor({cur[0]});
      l.running_var = Tensor({cur[0]}, 1.0);
      break;
    case LayerKind::MaxPool:
      PLAYPRUNE_CHECK(cur.size() == 3 && cur[1] >= 2 && cur[2] >= 2, "layer ", i,
                      ": maxpool needs a spatial input of at least 2x2");
      cur = {cur[0], cur[1] / 2, cur[2] / 2};
      break;
    default: break;
    }
    layers.push_back(std::move(l));
  }
  PLAYPRUNE_CHECK(!layers.empty() && layers.back().kind == LayerKind::Dense,
                  "architecture must end with a dense classifier layer");

  NetworkModel model(arch.input_shape(), std::move(layers));
  for (auto i : model.conv_layers()) {
    const bool structurally = model.dependency(i).has_value();
    const bool requested = arch.layers[i].prunable.value_or(true);
    model.layer(i).prunable = structurally && requested;
  }
  return model;
}

} // namespace playprune

#endif // PLAYPRUNE_MODEL_HPP
