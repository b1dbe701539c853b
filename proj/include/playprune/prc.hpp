#ifndef PLAYPRUNE_PRC_HPP
#define PLAYPRUNE_PRC_HPP

// Pruning rate controller. All accuracies are percentage points.
//
//   T_r      = max(acc - (E - eps), 0)
//   W_A      = delta_w * T_r * W
//   lambda_A = T_r * lambda
//
// Positive gap: prune with (W_A, lambda_A). Zero gap: fine-tune only
// (lambda_A = 0) for up to recovery_patience epochs, then roll back.

#include "error.hpp"
#include "threshold_init.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace playprune {

inline double tolerance_gap(double accuracy, double baseline, double epsilon) {
  const double gap = accuracy - (baseline - epsilon);
  return gap > 0.0 ? gap : 0.0;
}

struct AdaptiveThresholds {
  std::vector<std::size_t> layers;
  std::vector<double> values;

  double at(std::size_t layer) const {
    for (std::size_t k = 0; k < layers.size(); ++k)
      if (layers[k] == layer)
        return values[k];
    return 0.0;
  }
};

inline AdaptiveThresholds adaptive_thresholds(const ThresholdVector &W,
                                              double gap, double delta_w) {
  PLAYPRUNE_CHECK(gap >= 0.0, "adaptive_thresholds: gap must be >= 0, got ", gap);
  AdaptiveThresholds wa{W.layers, {}};
  wa.values.reserve(W.values.size());
  for (double w : W.values)
    wa.values.push_back(delta_w * gap * w);
  return wa;
}

inline double adaptive_lambda(double accuracy, double baseline, double epsilon,
                              double lambda) {
  PLAYPRUNE_CHECK(lambda >= 0.0, "adaptive_lambda: lambda must be >= 0");
  const double gap = accuracy - (baseline - epsilon);
  return gap > 0.0 ? gap * lambda : 0.0;
}

struct ControllerState {
  double baseline = 0.0;      // E
  double epsilon = 1.0;
  double lambda = 0.0005;
  double lambda_A = 0.0;
  double delta_w = 1.0;
  double gap = 0.0;           // T_r
  ThresholdVector W;
  std::size_t recovery_patience = 5;
  std::size_t recovery_epochs = 0; // consecutive
  std::vector<double> history;
  std::optional<double> last_good_accuracy;
  std::optional<std::size_t> last_good_epoch;

  void validate() const {
    PLAYPRUNE_CHECK(epsilon > 0.0, "controller: epsilon must be > 0, got ", epsilon);
    PLAYPRUNE_CHECK(delta_w > 0.0, "controller: delta_w must be > 0, got ", delta_w);
    PLAYPRUNE_CHECK(lambda >= 0.0, "controller: lambda must be >= 0, got ", lambda);
    PLAYPRUNE_CHECK(recovery_patience >= 1, "controller: recovery_patience must be >= 1");
    for (double w : W.values)
      PLAYPRUNE_CHECK(w >= 0.0, "controller: thresholds must be >= 0");
  }

  double tolerance_floor() const { return baseline - epsilon; }

  bool operator==(const ControllerState &) const = default;
};

enum class Action { Prune, Recover, Rollback };

inline const char *action_name(Action a) {
  switch (a) {
  case Action::Prune: return "prune";
  case Action::Recover: return "recover";
  case Action::Rollback: return "rollback";
  }
  return "?";
}

struct Decision {
  Action action = Action::Recover;
  AdaptiveThresholds W_A;
  double lambda_A = 0.0;
  double gap = 0.0;
  bool checkpoint = false;     // accuracy is in tolerance: snapshot this model
  bool can_restore = true;     // Rollback only: a last-good snapshot exists
};

/// Advances the controller by one observed validation accuracy.
/// `epoch` labels the snapshot when the model is in tolerance.
inline Decision controller_update(ControllerState &s, double accuracy,
                                  std::size_t epoch = 0) {
  PLAYPRUNE_CHECK(std::isfinite(accuracy) && accuracy >= 0.0 && accuracy <= 100.0,
                  "controller: accuracy must lie in [0,100], got ", accuracy);
  s.history.push_back(accuracy);
  Decision d;
  d.gap = tolerance_gap(accuracy, s.baseline, s.epsilon);
  s.gap = d.gap;
  if (accuracy >= s.tolerance_floor()) {
    d.checkpoint = true;
    s.last_good_accuracy = accuracy;
    s.last_good_epoch = epoch;
  }
  if (d.gap > 0.0) {
    d.action = Action::Prune;
    d.W_A = adaptive_thresholds(s.W, d.gap, s.delta_w);
    d.lambda_A = adaptive_lambda(accuracy, s.baseline, s.epsilon, s.lambda);
    s.recovery_epochs = 0;
  } else if (s.recovery_epochs < s.recovery_patience) {
    d.action = Action::Recover;
    d.W_A = adaptive_thresholds(s.W, 0.0, s.delta_w);
    ++s.recovery_epochs;
  } else {
    d.action = Action::Rollback;
    d.can_restore = s.last_good_accuracy.has_value();
  }
  s.lambda_A = d.lambda_A;
  return d;
}

/// Forces a Recover decision (or Rollback once patience is spent) without
/// a new accuracy observation, e.g. after a numerically failed epoch.
inline Decision controller_force_recover(ControllerState &s) {
  Decision d;
  d.W_A = adaptive_thresholds(s.W, 0.0, s.delta_w);
  if (s.recovery_epochs < s.recovery_patience) {
    d.action = Action::Recover;
    ++s.recovery_epochs;
  } else {
    d.action = Action::Rollback;
    d.can_restore = s.last_good_accuracy.has_value();
  }
  s.gap = 0.0;
  s.lambda_A = 0.0;
  return d;
}

} // namespace playprune

#endif // PLAYPRUNE_PRC_HPP
