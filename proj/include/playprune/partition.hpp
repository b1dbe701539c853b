#ifndef PLAYPRUNE_PARTITION_HPP
#define PLAYPRUNE_PARTITION_HPP

#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

namespace playprune {

/// Filter importance |f_j|: sum of absolute kernel coefficients (bias is
/// not part of the filter tensor passed here).
inline double filter_importance(std::span<const double> filter) {
  PLAYPRUNE_CHECK(!filter.empty(), "filter_importance: empty filter");
  double s = 0.0;
  for (double w : filter)
    s += std::abs(w);
  return s;
}

using ImportanceFn = std::function<double(std::span<const double>)>;

/// Importance of every filter of conv layer `l`.
inline std::vector<double> filter_norms(const LayerSpec &l,
                                        const ImportanceFn &importance = filter_importance) {
  PLAYPRUNE_CHECK(l.is_conv(), "filter_norms: not a conv layer");
  const std::size_t n = l.units(), row = l.weight.size() / n;
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j)
    out[j] = importance(std::span<const double>(l.weight.ptr() + j * row, row));
  return out;
}

struct LayerPartition {
  std::size_t layer = 0;
  std::vector<std::size_t> unimportant; // U, ascending importance
  std::vector<std::size_t> important;   // I, ascending index

  bool operator==(const LayerPartition &) const = default;
};

/// Per-conv-layer split into unimportant (U) and important (I) filters.
struct Partition {
  double alpha = 10.0;
  std::vector<LayerPartition> layers;

  const LayerPartition *find(std::size_t layer) const {
    for (const auto &p : layers)
      if (p.layer == layer)
        return &p;
    return nullptr;
  }

  bool operator==(const Partition &) const = default;
};

/// |U| for a layer of n filters: floor(alpha/100 * n), at most n - 1.
inline std::size_t unimportant_count(double alpha, std::size_t n) {
  const auto k = static_cast<std::size_t>(
      std::floor(alpha * static_cast<double>(n) / 100.0 + 1e-9));
  return std::min(k, n > 0 ? n - 1 : 0);
}

/// Selects, in every prune-eligible conv layer, the floor(alpha% * n_i)
/// filters of least importance (ties: lower index first). Ineligible conv
/// layers get an empty U.
inline Partition partition_model(const NetworkModel &model, double alpha,
                                 const ImportanceFn &importance = filter_importance) {
  PLAYPRUNE_CHECK(alpha > 0.0 && alpha < 100.0,
                  "partition: alpha must lie in (0,100), got ", alpha);
  Partition p;
  p.alpha = alpha;
  for (auto i : model.conv_layers()) {
    const auto &l = model.layer(i);
    LayerPartition lp;
    lp.layer = i;
    const std::size_t n = l.units();
    if (l.prunable) {
      const auto norms = filter_norms(l, importance);
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        return norms[a] < norms[b];
      });
      const std::size_t k = unimportant_count(alpha, n);
      lp.unimportant.assign(order.begin(), order.begin() + static_cast<long>(k));
    }
    std::vector<bool> in_u(n, false);
    for (auto j : lp.unimportant)
      in_u[j] = true;
    for (std::size_t j = 0; j < n; ++j)
      if (!in_u[j])
        lp.important.push_back(j);
    p.layers.push_back(std::move(lp));
  }
  return p;
}

} // namespace playprune

#endif // PLAYPRUNE_PARTITION_HPP
