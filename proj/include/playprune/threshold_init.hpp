#ifndef PLAYPRUNE_THRESHOLD_INIT_HPP
#define PLAYPRUNE_THRESHOLD_INIT_HPP

#include "partition.hpp"
#include "sparse_optimizer.hpp"
#include "surgery.hpp"
#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

namespace playprune {

/// Calibrated per-layer thresholds W_{gamma_i}, one per prune-eligible conv
/// layer, in |f| units.
struct ThresholdVector {
  std::vector<std::size_t> layers;
  std::vector<double> values;

  double at(std::size_t layer) const {
    for (std::size_t k = 0; k < layers.size(); ++k)
      if (layers[k] == layer)
        return values[k];
    detail::fail("no threshold for layer ", layer);
  }

  bool operator==(const ThresholdVector &) const = default;
};

/// Accuracy lost (percentage points, relative to `baseline_accuracy`) when
/// every U filter of `layer` with |f| <= candidate is masked. The model is
/// restored before returning.
inline double accuracy_drop_probe(NetworkModel &model, const Partition &part,
                                  std::size_t layer, double candidate,
                                  const DatasetSplit &valset,
                                  double baseline_accuracy) {
  PLAYPRUNE_CHECK(candidate >= 0.0, "probe: candidate threshold must be >= 0");
  const auto *lp = part.find(layer);
  PLAYPRUNE_CHECK(lp != nullptr, "probe: layer ", layer, " not in partition");
  const auto norms = filter_norms(model.layer(layer));
  std::set<std::size_t> masked;
  for (auto j : lp->unimportant)
    if (norms[j] <= candidate)
      masked.insert(j);
  if (masked.empty())
    return 0.0;

  const auto dep = model.dependency(layer);
  const LayerSpec saved = model.layer(layer);
  std::vector<std::pair<std::size_t, LayerSpec>> saved_bn;
  if (dep)
    for (auto b : dep->batchnorms)
      saved_bn.emplace_back(b, model.layer(b));

  mask_filters(model, {{layer, masked}});
  const double acc = evaluate(model, valset);
  model.layer(layer) = saved;
  for (auto &[b, l] : saved_bn)
    model.layer(b) = std::move(l);
  return baseline_accuracy - acc;
}

inline double accuracy_drop_probe(NetworkModel &model, const Partition &part,
                                  std::size_t layer, double candidate,
                                  const DatasetSplit &valset) {
  const double base = evaluate(model, valset);
  return accuracy_drop_probe(model, part, layer, candidate, valset, base);
}

struct ThresholdSearchOptions {
  double tau0 = 0.1;             // tolerated drop, percentage points
  double relative_width = 1e-4;  // stop when width < this * upper bound
  std::size_t max_iterations = 30;
};

/// Largest threshold in [0, max_{j in U}|f_j|] whose probe drop is <= tau0,
/// by bisection. Assumes the drop is roughly monotone in the threshold.
inline double search_threshold(NetworkModel &model, const Partition &part,
                               std::size_t layer, const DatasetSplit &valset,
                               double baseline_accuracy,
                               const ThresholdSearchOptions &opt = {}) {
  const auto *lp = part.find(layer);
  PLAYPRUNE_CHECK(lp != nullptr, "threshold search: layer ", layer,
                  " not in partition");
  if (lp->unimportant.empty())
    return 0.0;
  const auto norms = filter_norms(model.layer(layer));
  double upper = 0.0;
  for (auto j : lp->unimportant)
    upper = std::max(upper, norms[j]);

  // The masked set only changes when the threshold crosses a U norm, so
  // drops are memoized by how many U filters fall under the threshold.
  std::map<std::size_t, double> memo;
  auto probe = [&](double t) {
    std::size_t count = 0;
    for (auto j : lp->unimportant)
      count += norms[j] <= t;
    auto it = memo.find(count);
    if (it != memo.end())
      return it->second;
    const double d =
        accuracy_drop_probe(model, part, layer, t, valset, baseline_accuracy);
    memo.emplace(count, d);
    return d;
  };

  if (probe(upper) <= opt.tau0)
    return upper;
  double lo = 0.0, hi = upper;
  for (std::size_t it = 0;
       it < opt.max_iterations && hi - lo >= opt.relative_width * upper; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (probe(mid) <= opt.tau0)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

struct ThresholdCalibration {
  ThresholdVector thresholds;
  Partition partition;
  PenalizedEpochStats epoch;
  double accuracy = 0.0; // validation accuracy after the calibration epoch
};

/// Runs one penalized epoch with lambda_A = lambda on an alpha-partition,
/// then bisects a threshold for every prune-eligible layer.
inline ThresholdCalibration init_thresholds(NetworkModel &model, double alpha,
                                            double lambda,
                                            const DatasetSplit &train,
                                            const DatasetSplit &valset, Sgd &sgd,
                                            Rng &rng,
                                            const ThresholdSearchOptions &opt = {}) {
  PLAYPRUNE_CHECK(lambda > 0.0, "init_thresholds: lambda must be positive");
  PLAYPRUNE_CHECK(opt.tau0 >= 0.0, "init_thresholds: tau0 must be >= 0");
  ThresholdCalibration cal;
  cal.partition = partition_model(model, alpha);
  cal.epoch = penalized_epoch(model, cal.partition, lambda, train, sgd, rng);
  cal.accuracy = evaluate(model, valset);
  for (auto i : model.prunable_layers()) {
    cal.thresholds.layers.push_back(i);
    cal.thresholds.values.push_back(
        search_threshold(model, cal.partition, i, valset, cal.accuracy, opt));
  }
  return cal;
}

} // namespace playprune

#endif // PLAYPRUNE_THRESHOLD_INIT_HPP
