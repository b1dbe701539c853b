#ifndef PLAYPRUNE_SPARSE_OPTIMIZER_HPP
#define PLAYPRUNE_SPARSE_OPTIMIZER_HPP

// One training epoch of  C(theta) + lambda_A * sum_{f in U} |f|_1.
//
// The penalty enters as the subgradient lambda_A * sign(w) on every kernel
// coefficient of every filter in U (sign(0) = 0). After each update, a U
// coefficient whose sign flipped is clipped to zero and its momentum
// cleared, so the penalty alone never drives a weight through zero.

#include "partition.hpp"
#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace playprune {

inline double group_l1_subgradient(double w, double lambda_A) {
  PLAYPRUNE_CHECK(lambda_A >= 0.0, "group_l1: lambda_A must be non-negative, got ",
                  lambda_A);
  if (w > 0.0)
    return lambda_A;
  if (w < 0.0)
    return -lambda_A;
  return 0.0;
}

/// Adds the penalty subgradient into the grad buffers of U filters.
inline void add_group_l1_subgradient(NetworkModel &model, const Partition &part,
                                     double lambda_A) {
  PLAYPRUNE_CHECK(lambda_A >= 0.0 && std::isfinite(lambda_A),
                  "group_l1: lambda_A must be finite and non-negative, got ",
                  lambda_A);
  if (lambda_A == 0.0)
    return;
  for (const auto &lp : part.layers) {
    auto &w = model.layer(lp.layer).weight;
    w.ensure_grad();
    const std::size_t row = w.size() / w.dim(0);
    auto g = w.grad();
    for (auto j : lp.unimportant)
      for (std::size_t k = j * row; k < (j + 1) * row; ++k)
        g[k] += group_l1_subgradient(w[k], lambda_A);
  }
}

struct NormSummary {
  std::size_t count = 0;
  double min = 0.0, max = 0.0, mean = 0.0;
};

inline NormSummary summarize(const std::vector<double> &v) {
  NormSummary s;
  s.count = v.size();
  if (v.empty())
    return s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v)
    sum += x;
  s.mean = sum / static_cast<double>(v.size());
  return s;
}

/// |f_j| distribution of one layer, split by partition membership.
struct LayerNormStats {
  std::size_t layer = 0;
  NormSummary u_before, u_after, i_before, i_after;
};

struct PenalizedEpochStats {
  double mean_loss = 0.0;
  std::size_t steps = 0;
  double lambda_A = 0.0;
  std::vector<LayerNormStats> layers;
};

namespace detail {

inline std::pair<std::vector<double>, std::vector<double>>
split_norms(const NetworkModel &model, const LayerPartition &lp) {
  const auto norms = filter_norms(model.layer(lp.layer));
  std::vector<double> u, i;
  for (auto j : lp.unimportant)
    u.push_back(norms[j]);
  for (auto j : lp.important)
    i.push_back(norms[j]);
  return {u, i};
}

inline std::size_t param_index(NetworkModel &model, const Tensor *t) {
  const auto params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k)
    if (params[k] == t)
      return k;
  detail::fail("tensor is not a model parameter");
}

} // namespace detail

/// One full pass over `train` with the penalized objective. On a non-finite
/// loss the model and optimizer are restored to their epoch-start state and
/// NumericalError is rethrown.
inline PenalizedEpochStats penalized_epoch(NetworkModel &model,
                                           const Partition &part,
                                           double lambda_A,
                                           const DatasetSplit &train, Sgd &sgd,
                                           Rng &rng) {
  PLAYPRUNE_CHECK(lambda_A >= 0.0 && std::isfinite(lambda_A),
                  "penalized_epoch: lambda_A must be finite and non-negative, got ",
                  lambda_A);
  for (const auto &lp : part.layers) {
    PLAYPRUNE_CHECK(lp.layer < model.size() && model.layer(lp.layer).is_conv() &&
                        lp.unimportant.size() + lp.important.size() ==
                            model.layer(lp.layer).units(),
                    "penalized_epoch: partition does not match layer ", lp.layer);
  }

  PenalizedEpochStats stats;
  stats.lambda_A = lambda_A;
  for (const auto &lp : part.layers) {
    LayerNormStats ls;
    ls.layer = lp.layer;
    auto [u, i] = detail::split_norms(model, lp);
    ls.u_before = summarize(u);
    ls.i_before = summarize(i);
    stats.layers.push_back(ls);
  }

  const NetworkModel start_model = model;
  const Sgd start_sgd = sgd;

  // Signs of U coefficients before each update, for the zero-crossing clip.
  struct Tracked {
    std::size_t layer, param, begin, end;
  };
  std::vector<Tracked> tracked;
  std::vector<double> before;
  if (lambda_A > 0.0)
    for (const auto &lp : part.layers) {
      auto &w = model.layer(lp.layer).weight;
      const std::size_t row = w.size() / w.dim(0);
      const std::size_t pi = detail::param_index(model, &w);
      for (auto j : lp.unimportant)
        tracked.push_back({lp.layer, pi, j * row, (j + 1) * row});
    }

  StepHooks hooks;
  if (lambda_A > 0.0) {
    hooks.before_update = [&](NetworkModel &m) {
      add_group_l1_subgradient(m, part, lambda_A);
      before.clear();
      for (const auto &t : tracked) {
        const auto &w = m.layer(t.layer).weight;
        before.insert(before.end(), w.ptr() + t.begin, w.ptr() + t.end);
      }
    };
    hooks.after_update = [&](NetworkModel &m, Sgd &opt) {
      std::size_t pos = 0;
      for (const auto &t : tracked) {
        auto &w = m.layer(t.layer).weight;
        auto v = opt.velocity(t.param);
        for (std::size_t k = t.begin; k < t.end; ++k, ++pos) {
          const double old = before[pos];
          if ((old > 0.0 && w[k] < 0.0) || (old < 0.0 && w[k] > 0.0)) {
            w[k] = 0.0;
            if (!v.empty())
              v[k] = 0.0;
          }
        }
      }
    };
  }

  try {
    const auto ts = train_epoch(model, train, sgd, rng, hooks);
    stats.mean_loss = ts.mean_loss;
    stats.steps = ts.steps;
  } catch (const NumericalError &) {
    model = start_model;
    sgd = start_sgd;
    throw;
  }

  for (std::size_t k = 0; k < part.layers.size(); ++k) {
    auto [u, i] = detail::split_norms(model, part.layers[k]);
    stats.layers[k].u_after = summarize(u);
    stats.layers[k].i_after = summarize(i);
  }
  return stats;
}

} // namespace playprune

#endif // PLAYPRUNE_SPARSE_OPTIMIZER_HPP
