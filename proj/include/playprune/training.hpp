#ifndef PLAYPRUNE_TRAINING_HPP
#define PLAYPRUNE_TRAINING_HPP

#include "data.hpp"
#include "model.hpp"
#include "random.hpp"
#include "sgd.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace playprune {

/// Raised when a training step produces a non-finite loss or gradient.
class NumericalError : public Error {
public:
  using Error::Error;
};

/// Top-1 accuracy in percentage points, eval mode, fixed batch order.
inline double evaluate(NetworkModel &model, const DatasetSplit &data,
                       std::size_t batch_size = 256) {
  PLAYPRUNE_CHECK(data.size() > 0, "evaluate: empty ", role_name(data.role),
                  " split");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = model.forward(data.batch(idx), Mode::Eval);
    const std::size_t K = logits.dim(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const double *z = logits.ptr() + b * K;
      std::size_t best = 0;
      for (std::size_t k = 1; k < K; ++k)
        if (z[k] > z[best])
          best = k;
      if (static_cast<int>(best) == data.labels[idx[b]])
        ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) /
         static_cast<double>(data.size());
}

/// Per-step hooks used to fold extra terms (such as a sparsity penalty)
/// into an otherwise plain SGD epoch.
struct StepHooks {
  std::function<void(NetworkModel &)> before_update;
  std::function<void(NetworkModel &, Sgd &)> after_update;
};

struct TrainStats {
  double mean_loss = 0.0;
  std::size_t steps = 0;
};

/// One pass over `data` in an order drawn from `rng`. Throws
/// NumericalError on a non-finite loss; the model is left mid-epoch.
inline TrainStats train_epoch(NetworkModel &model, const DatasetSplit &data,
                              Sgd &sgd, Rng &rng, const StepHooks &hooks = {}) {
  PLAYPRUNE_CHECK(data.size() > 0, "train_epoch: empty training split");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const std::size_t bs = sgd.config().batch_size;
  TrainStats stats;
  double loss_sum = 0.0;
  ActivationCache cache;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t end = std::min(order.size(), start + bs);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    model.zero_grad();
    const Tensor logits = model.forward(data.batch(idx), Mode::Train, &cache);
    const auto labels = data.batch_labels(idx);
    auto loss = softmax_cross_entropy(logits, labels);
    if (!std::isfinite(loss.loss))
      throw NumericalError("non-finite training loss at step " +
                           std::to_string(stats.steps));
    model.backward(cache, loss.grad_logits);
    if (hooks.before_update)
      hooks.before_update(model);
    try {
      sgd.step(model.parameters());
    } catch (const Error &e) {
      throw NumericalError(e.what());
    }
    if (hooks.after_update)
      hooks.after_update(model, sgd);
    loss_sum += loss.loss;
    ++stats.steps;
  }
  stats.mean_loss = loss_sum / static_cast<double>(stats.steps);
  return stats;
}

} // namespace playprune

#endif // PLAYPRUNE_TRAINING_HPP
