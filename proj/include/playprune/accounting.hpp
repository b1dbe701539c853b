#ifndef PLAYPRUNE_ACCOUNTING_HPP
#define PLAYPRUNE_ACCOUNTING_HPP

// Parameter and FLOP accounting. One FLOP is one multiply-accumulate in a
// conv or dense layer; activations, pooling and batchnorm are free.

#include "model.hpp"

#include <cstdint>
#include <vector>

namespace playprune {

struct LayerCost {
  std::size_t layer = 0;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

inline std::vector<LayerCost> layer_costs(const NetworkModel &model,
                                          const Shape &input_shape) {
  std::vector<LayerCost> out;
  if (model.size() == 0)
    return out;
  PLAYPRUNE_CHECK(input_shape.size() == 3, "input shape must be [C,H,W]");
  Shape cur = input_shape;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto &l = model.layer(i);
    LayerCost c{i, 0, 0};
    switch (l.kind) {
    case LayerKind::Conv: {
      const auto g = conv_geometry({1, cur[0], cur[1], cur[2]},
                                   l.weight.shape(), l.stride, l.pad);
      c.params = l.weight.size() + l.bias.size();
      c.flops = static_cast<std::uint64_t>(g.oh * g.ow) * l.weight.size();
      cur = {g.f, g.oh, g.ow};
      break;
    }
    case LayerKind::Dense:
      PLAYPRUNE_CHECK(shape_size(cur) == l.weight.dim(1), "layer ", i,
                      ": dense expects D=", l.weight.dim(1), " got ",
                      shape_size(cur));
      c.params = l.weight.size() + l.bias.size();
      c.flops = l.weight.size();
      cur = {l.weight.dim(0)};
      break;
    case LayerKind::BatchNorm:
      c.params = l.gamma.size() + l.beta.size();
      break;
    case LayerKind::MaxPool:
      cur = {cur[0], cur[1] / 2, cur[2] / 2};
      break;
    default: break;
    }
    out.push_back(c);
  }
  return out;
}

inline std::uint64_t count_params(const NetworkModel &model) {
  std::uint64_t total = 0;
  for (const auto &c : layer_costs(model, model.input_shape()))
    total += c.params;
  return total;
}

inline std::uint64_t count_flops(const NetworkModel &model,
                                 const Shape &input_shape) {
  std::uint64_t total = 0;
  for (const auto &c : layer_costs(model, input_shape))
    total += c.flops;
  return total;
}

inline std::uint64_t count_flops(const NetworkModel &model) {
  return count_flops(model, model.input_shape());
}

/// FLOPs the model would have with conv layer i holding `filters[i]`
/// filters (entries for non-conv layers are ignored). Used to plan removals
/// without materializing each intermediate model.
inline std::uint64_t flops_with_filter_counts(const NetworkModel &model,
                                              const std::vector<std::size_t> &filters) {
  PLAYPRUNE_CHECK(filters.size() == model.size(),
                  "flops_with_filter_counts: need one entry per layer");
  Shape cur = model.input_shape();
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto &l = model.layer(i);
    switch (l.kind) {
    case LayerKind::Conv: {
      const std::size_t f = filters[i];
      const std::size_t kh = l.weight.dim(2), kw = l.weight.dim(3);
      const std::size_t oh = (cur[1] + 2 * l.pad - kh) / l.stride + 1;
      const std::size_t ow = (cur[2] + 2 * l.pad - kw) / l.stride + 1;
      total += static_cast<std::uint64_t>(oh * ow) * f * cur[0] * kh * kw;
      cur = {f, oh, ow};
      break;
    }
    case LayerKind::Dense:
      total += static_cast<std::uint64_t>(l.weight.dim(0)) * shape_size(cur);
      cur = {l.weight.dim(0)};
      break;
    case LayerKind::MaxPool:
      cur = {cur[0], cur[1] / 2, cur[2] / 2};
      break;
    default: break;
    }
  }
  return total;
}

/// Remaining filters per conv layer and their total (#w).
struct FilterCensus {
  std::vector<std::size_t> layers;
  std::vector<std::size_t> filters;
  std::size_t total = 0;

  bool operator==(const FilterCensus &) const = default;
};

inline FilterCensus filter_census(const NetworkModel &model) {
  FilterCensus c;
  for (auto i : model.conv_layers()) {
    c.layers.push_back(i);
    c.filters.push_back(model.layer(i).units());
    c.total += model.layer(i).units();
  }
  return c;
}

} // namespace playprune

#endif // PLAYPRUNE_ACCOUNTING_HPP
