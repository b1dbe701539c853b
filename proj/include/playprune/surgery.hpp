#ifndef PLAYPRUNE_SURGERY_HPP
#define PLAYPRUNE_SURGERY_HPP

// Filter-level structural edits. Removing filter j of a conv deletes its
// kernel and bias, the matching batchnorm channels, and the input channel
// (or flattened column block) it feeds in the consuming layer.

#include "model.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <vector>

namespace playprune {

using FilterRemovals = std::map<std::size_t, std::set<std::size_t>>;

namespace detail {

// Keeps the given indices along axis 0 of `t`.
inline Tensor keep_rows(const Tensor &t, const std::vector<std::size_t> &keep) {
  const std::size_t row = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = keep.size();
  std::vector<double> data;
  data.reserve(keep.size() * row);
  for (auto k : keep)
    data.insert(data.end(), t.ptr() + k * row, t.ptr() + (k + 1) * row);
  return Tensor(std::move(shape), std::move(data));
}

// Keeps blocks of `block` consecutive elements along axis 1 of `t`
// (viewed as [d0, d1/block, block, rest...]).
inline Tensor keep_axis1(const Tensor &t, const std::vector<std::size_t> &keep,
                         std::size_t block) {
  const std::size_t outer = t.dim(0);
  const std::size_t inner = t.size() / (outer * t.dim(1)); // trailing dims
  const std::size_t chunk = block * inner;
  Shape shape = t.shape();
  shape[1] = keep.size() * block;
  std::vector<double> data;
  data.reserve(outer * keep.size() * chunk);
  for (std::size_t o = 0; o < outer; ++o) {
    const double *base = t.ptr() + o * t.dim(1) * inner;
    for (auto k : keep)
      data.insert(data.end(), base + k * chunk, base + (k + 1) * chunk);
  }
  return Tensor(std::move(shape), std::move(data));
}

inline std::vector<std::size_t> kept(std::size_t n,
                                     const std::set<std::size_t> &drop) {
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < n; ++j)
    if (!drop.count(j))
      keep.push_back(j);
  return keep;
}

inline void check_removal(const NetworkModel &model, std::size_t layer,
                          const std::set<std::size_t> &idx) {
  PLAYPRUNE_CHECK(layer < model.size() && model.layer(layer).is_conv(),
                  "remove_filters: layer ", layer, " is not a conv layer");
  PLAYPRUNE_CHECK(model.layer(layer).prunable, "remove_filters: layer ", layer,
                  " (", model.layer(layer).name, ") is prune-ineligible");
  const std::size_t n = model.layer(layer).units();
  for (auto j : idx)
    PLAYPRUNE_CHECK(j < n, "remove_filters: filter index ", j,
                    " out of range for layer ", layer, " with ", n, " filters");
  PLAYPRUNE_CHECK(idx.size() < n, "remove_filters: removing ", idx.size(),
                  " of ", n, " filters would empty layer ", layer);
}

} // namespace detail

/// Returns a copy of `model` with the named filters physically removed and
/// every coupled tensor shrunk accordingly.
inline NetworkModel remove_filters(const NetworkModel &model,
                                   const FilterRemovals &removals) {
  for (const auto &[layer, idx] : removals)
    detail::check_removal(model, layer, idx);

  // Dependencies are resolved on the original model; removals in one layer
  // never change another layer's coupling structure.
  std::vector<ConvDependency> deps;
  for (const auto &[layer, idx] : removals)
    if (!idx.empty())
      deps.push_back(*model.dependency(layer));

  auto layers = model.layers();
  for (const auto &dep : deps) {
    const auto &drop = removals.at(dep.producer);
    const auto keep = detail::kept(layers[dep.producer].units(), drop);
    auto &prod = layers[dep.producer];
    prod.weight = detail::keep_rows(prod.weight, keep);
    prod.bias = detail::keep_rows(prod.bias, keep);
    for (auto b : dep.batchnorms) {
      auto &bn = layers[b];
      bn.gamma = detail::keep_rows(bn.gamma, keep);
      bn.beta = detail::keep_rows(bn.beta, keep);
      bn.running_mean = detail::keep_rows(bn.running_mean, keep);
      bn.running_var = detail::keep_rows(bn.running_var, keep);
    }
    auto &cons = layers[dep.consumer];
    cons.weight = detail::keep_axis1(cons.weight, keep, dep.spatial);
  }
  for (auto &l : layers) {
    l.weight.drop_grad();
    l.bias.drop_grad();
    l.gamma.drop_grad();
    l.beta.drop_grad();
  }
  return NetworkModel(model.input_shape(), std::move(layers));
}

/// Zeroes the outgoing contribution of the named filters in place: kernel,
/// bias and the affine parameters of dependent batchnorm channels. The
/// resulting function equals that of remove_filters on the same set.
inline void mask_filters(NetworkModel &model, const FilterRemovals &removals) {
  for (const auto &[layer, idx] : removals) {
    if (idx.empty())
      continue;
    const auto dep = model.dependency(layer);
    auto &l = model.layer(layer);
    const std::size_t row = l.weight.size() / l.weight.dim(0);
    for (auto j : idx) {
      PLAYPRUNE_CHECK(j < l.units(), "mask_filters: filter index ", j,
                      " out of range for layer ", layer);
      std::fill_n(l.weight.ptr() + j * row, row, 0.0);
      l.bias[j] = 0.0;
      if (dep)
        for (auto b : dep->batchnorms) {
          model.layer(b).gamma[j] = 0.0;
          model.layer(b).beta[j] = 0.0;
        }
    }
  }
}

} // namespace playprune

#endif // PLAYPRUNE_SURGERY_HPP
