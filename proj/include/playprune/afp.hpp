#ifndef PLAYPRUNE_AFP_HPP
#define PLAYPRUNE_AFP_HPP

#include "accounting.hpp"
#include "partition.hpp"
#include "prc.hpp"
#include "surgery.hpp"

#include <algorithm>

namespace playprune {

struct PruneStepResult {
  NetworkModel model;
  FilterRemovals removed; // original indices, per layer (non-empty sets only)
  FilterCensus census;
};

/// Removes every U filter with |f_j| <= W_A[layer]. Filters in I are never
/// touched, and each layer keeps at least one filter (the highest-norm
/// candidates survive if needed).
inline PruneStepResult prune_step(const NetworkModel &model,
                                  const Partition &part,
                                  const AdaptiveThresholds &W_A) {
  for (double w : W_A.values)
    PLAYPRUNE_CHECK(w >= 0.0 && !std::isnan(w),
                    "prune_step: adaptive thresholds must be >= 0");
  FilterRemovals removals;
  for (const auto &lp : part.layers) {
    if (lp.unimportant.empty())
      continue;
    const auto &l = model.layer(lp.layer);
    PLAYPRUNE_CHECK(l.is_conv() &&
                        lp.unimportant.size() + lp.important.size() == l.units(),
                    "prune_step: partition does not match layer ", lp.layer);
    const double threshold = W_A.at(lp.layer);
    const auto norms = filter_norms(l);
    std::vector<std::size_t> cand;
    for (auto j : lp.unimportant)
      if (norms[j] <= threshold)
        cand.push_back(j);
    if (cand.size() >= l.units()) {
      std::stable_sort(cand.begin(), cand.end(),
                       [&](auto a, auto b) { return norms[a] < norms[b]; });
      cand.resize(l.units() - 1);
    }
    if (!cand.empty())
      removals[lp.layer] = {cand.begin(), cand.end()};
  }
  PruneStepResult r;
  r.model = removals.empty() ? model : remove_filters(model, removals);
  r.removed = std::move(removals);
  r.census = filter_census(r.model);
  return r;
}

} // namespace playprune

#endif // PLAYPRUNE_AFP_HPP
