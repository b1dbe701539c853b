#ifndef PLAYPRUNE_ORCHESTRATOR_HPP
#define PLAYPRUNE_ORCHESTRATOR_HPP

// The prune/recover game loop and the one-shot pruning baseline.
//
// Per game epoch:
//   partition(alpha) -> penalized epoch(lambda_A) -> evaluate(validation)
//   -> controller decision -> prune | recover | rollback
// The penalized epoch of epoch t uses the lambda_A decided at epoch t-1,
// so fine-tuning after a prune step happens in the following epoch.

#include "accounting.hpp"
#include "afp.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "data.hpp"
#include "model.hpp"
#include "partition.hpp"
#include "prc.hpp"
#include "sparse_optimizer.hpp"
#include "threshold_init.hpp"
#include "training.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace playprune {

struct CampaignConfig {
  ArchConfig arch;
  DataConfig data;
  SgdConfig optimizer;
  double epsilon = 1.0;
  double alpha = 10.0;
  double lambda = 0.0005;
  double delta_w = 1.0;
  double tau0 = 0.1;
  std::size_t recovery_patience = 5;
  std::size_t max_epochs = 30;
  std::size_t baseline_epochs = 5;
  std::uint64_t seed = 1;

  void validate() const {
    PLAYPRUNE_CHECK(epsilon > 0.0, "controller.epsilon must be > 0, got ", epsilon);
    PLAYPRUNE_CHECK(alpha > 0.0 && alpha < 100.0,
                    "controller.alpha must lie in (0,100), got ", alpha);
    PLAYPRUNE_CHECK(lambda > 0.0, "controller.lambda must be > 0, got ", lambda);
    PLAYPRUNE_CHECK(delta_w > 0.0, "controller.delta_w must be > 0, got ", delta_w);
    PLAYPRUNE_CHECK(tau0 >= 0.0, "controller.tau0 must be >= 0, got ", tau0);
    PLAYPRUNE_CHECK(recovery_patience >= 1,
                    "controller.recovery_patience must be >= 1");
    PLAYPRUNE_CHECK(max_epochs >= 1, "campaign.max_epochs must be >= 1");
    Sgd::validate(optimizer);
  }
};

/// Builds a CampaignConfig from a document with sections [architecture],
/// [data], [optimizer], [controller] and [campaign]. Unset keys keep their
/// defaults; a seed absent from the document falls back to `seed_fallback`.
inline CampaignConfig parse_campaign(const ConfigDocument &doc,
                                     std::optional<std::uint64_t> seed_fallback = {}) {
  CampaignConfig c;
  c.arch = parse_architecture(doc);
  c.data = parse_data(doc);
  auto real = [&](const char *sec, const char *key, double &dst) {
    if (auto v = doc.get(sec, key))
      dst = parse_double(std::string(sec) + "." + key, *v);
  };
  auto size = [&](const char *sec, const char *key, std::size_t &dst) {
    if (auto v = doc.get(sec, key))
      dst = parse_size(std::string(sec) + "." + key, *v);
  };
  real("optimizer", "lr", c.optimizer.lr);
  real("optimizer", "momentum", c.optimizer.momentum);
  real("optimizer", "weight_decay", c.optimizer.weight_decay);
  size("optimizer", "batch_size", c.optimizer.batch_size);
  real("controller", "epsilon", c.epsilon);
  real("controller", "alpha", c.alpha);
  real("controller", "lambda", c.lambda);
  real("controller", "delta_w", c.delta_w);
  real("controller", "tau0", c.tau0);
  size("controller", "recovery_patience", c.recovery_patience);
  size("campaign", "max_epochs", c.max_epochs);
  size("campaign", "baseline_epochs", c.baseline_epochs);
  if (auto v = doc.get("campaign", "seed"))
    c.seed = parse_size("campaign.seed", *v);
  else if (seed_fallback)
    c.seed = *seed_fallback;
  c.validate();
  return c;
}

struct Workspace {
  DatasetSplit train, validation, test;
};

/// Loads the dataset and carves the per-class validation split. The split
/// depends on the data seed only, so every campaign seed sees the same one.
inline Workspace prepare_workspace(const CampaignConfig &cfg) {
  auto [train, test] = load_dataset(cfg.data);
  auto [rest, val] = make_validation_split(train, cfg.data.val_per_class,
                                           cfg.data.split_seed);
  return {std::move(rest), std::move(val), std::move(test)};
}

/// A trained, unpruned model plus the RNG stream position after training.
struct Baseline {
  NetworkModel model;
  Rng rng;
  double accuracy = 0.0; // validation, percentage points
};

inline Baseline train_baseline(const CampaignConfig &cfg, const Workspace &ws,
                               const std::function<void(std::size_t, double, double)>
                                   &on_epoch = {}) {
  Baseline b;
  b.rng = Rng(cfg.seed);
  b.model = build_model(cfg.arch, b.rng);
  Sgd sgd(cfg.optimizer);
  for (std::size_t e = 0; e < cfg.baseline_epochs; ++e) {
    const auto st = train_epoch(b.model, ws.train, sgd, b.rng);
    if (on_epoch)
      on_epoch(e + 1, st.mean_loss, evaluate(b.model, ws.validation));
  }
  b.accuracy = evaluate(b.model, ws.validation);
  return b;
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

struct LayerEpochSummary {
  std::size_t layer = 0;
  std::string name;
  std::size_t unimportant = 0;
  NormSummary u_after, i_after;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::string phase; // calibration | game | finetune
  double train_loss = 0.0;
  double lambda_applied = 0.0; // lambda_A used by this epoch's training
  double accuracy = 0.0;       // validation, after training, before pruning
  double gap = 0.0;
  std::string action;          // prune | recover | rollback | calibrate | finetune
  double next_lambda_A = 0.0;
  AdaptiveThresholds W_A;
  std::vector<LayerEpochSummary> layers;
  FilterRemovals removed;
  bool numerical_failure = false;
  bool checkpointed = false;
  FilterCensus census; // after this epoch's pruning
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct PruneReport {
  std::string kind = "game"; // game | oneshot
  std::uint64_t seed = 0;
  double epsilon = 0.0, alpha = 0.0, lambda = 0.0, delta_w = 0.0, tau0 = 0.0;
  std::size_t recovery_patience = 0;
  double baseline_accuracy = 0.0;
  double baseline_test_accuracy = 0.0;
  FilterCensus baseline_census;
  std::uint64_t baseline_params = 0, baseline_flops = 0;
  ThresholdVector thresholds;
  std::vector<EpochRecord> epochs;
  std::string stop_reason;
  std::optional<std::size_t> last_good_epoch;
  std::optional<double> last_good_accuracy;
  bool restored = false;
  double final_accuracy = 0.0;
  double final_test_accuracy = 0.0;
  FilterCensus final_census;
  std::uint64_t final_params = 0, final_flops = 0;
  std::uint64_t final_model_hash = 0;
  double target_flops_reduction = 0.0; // oneshot only
  bool target_reached = true;          // oneshot only
  std::vector<std::string> warnings;
  NetworkModel final_model;
  std::optional<Checkpoint> final_checkpoint;

  std::size_t epochs_run() const { return epochs.size(); }
  double flops_reduction() const {
    return baseline_flops ? 100.0 * (1.0 - double(final_flops) / double(baseline_flops)) : 0.0;
  }
  double params_reduction() const {
    return baseline_params ? 100.0 * (1.0 - double(final_params) / double(baseline_params)) : 0.0;
  }
  double filter_reduction() const {
    return baseline_census.total
               ? 100.0 * (1.0 - double(final_census.total) / double(baseline_census.total))
               : 0.0;
  }
};

struct CampaignHooks {
  std::function<void(const EpochRecord &)> on_epoch;
  /// Called with every last-good snapshot as it is taken.
  std::function<void(const Checkpoint &, std::size_t epoch)> on_checkpoint;
  /// Test hook: replaces the measured validation accuracy of a game epoch.
  std::function<double(std::size_t epoch, double measured)> accuracy_override;
};

namespace detail {

inline void fill_accounting(EpochRecord &r, const NetworkModel &m) {
  r.census = filter_census(m);
  r.params = count_params(m);
  r.flops = count_flops(m);
}

inline std::vector<LayerEpochSummary> layer_summaries(const NetworkModel &m,
                                                      const Partition &p,
                                                      const PenalizedEpochStats &st) {
  std::vector<LayerEpochSummary> out;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    LayerEpochSummary s;
    s.layer = p.layers[k].layer;
    s.name = m.layer(s.layer).name;
    s.unimportant = p.layers[k].unimportant.size();
    s.u_after = st.layers[k].u_after;
    s.i_after = st.layers[k].i_after;
    out.push_back(s);
  }
  return out;
}

inline void begin_report(PruneReport &rep, const CampaignConfig &cfg,
                         const NetworkModel &base, double base_acc,
                         const Workspace &ws) {
  rep.seed = cfg.seed;
  rep.epsilon = cfg.epsilon;
  rep.alpha = cfg.alpha;
  rep.lambda = cfg.lambda;
  rep.delta_w = cfg.delta_w;
  rep.tau0 = cfg.tau0;
  rep.recovery_patience = cfg.recovery_patience;
  rep.baseline_accuracy = base_acc;
  NetworkModel copy = base;
  rep.baseline_test_accuracy = evaluate(copy, ws.test);
  rep.baseline_census = filter_census(base);
  rep.baseline_params = count_params(base);
  rep.baseline_flops = count_flops(base);
}

inline void finish_report(PruneReport &rep, NetworkModel model,
                          const Workspace &ws, double val_acc) {
  rep.final_accuracy = val_acc;
  rep.final_test_accuracy = evaluate(model, ws.test);
  rep.final_census = filter_census(model);
  rep.final_params = count_params(model);
  rep.final_flops = count_flops(model);
  rep.final_model_hash = model_hash(model);
  rep.final_model = std::move(model);
}

} // namespace detail

/// Runs the prune/recover game from a trained baseline.
inline PruneReport run_game(const CampaignConfig &cfg, const Workspace &ws,
                            Baseline baseline, const CampaignHooks &hooks = {}) {
  cfg.validate();
  PLAYPRUNE_CHECK(ws.validation.size() > 0, "run_game: empty validation split");
  PruneReport rep;
  rep.kind = "game";
  NetworkModel model = std::move(baseline.model);
  Rng rng = baseline.rng;
  const double E = baseline.accuracy;
  detail::begin_report(rep, cfg, model, E, ws);

  ControllerState state;
  state.baseline = E;
  state.epsilon = cfg.epsilon;
  state.lambda = cfg.lambda;
  state.delta_w = cfg.delta_w;
  state.recovery_patience = cfg.recovery_patience;

  Sgd sgd(cfg.optimizer);
  std::optional<Checkpoint> last_good;
  auto snapshot = [&](std::size_t epoch) {
    last_good = checkpoint_save(model, &state, &rng, "{\"epoch\":" + std::to_string(epoch) + "}");
    if (hooks.on_checkpoint)
      hooks.on_checkpoint(*last_good, epoch);
  };

  // Epoch 0: threshold calibration.
  ThresholdSearchOptions search;
  search.tau0 = cfg.tau0;
  auto cal = init_thresholds(model, cfg.alpha, cfg.lambda, ws.train, ws.validation,
                             sgd, rng, search);
  state.W = cal.thresholds;
  state.validate();
  rep.thresholds = cal.thresholds;
  {
    EpochRecord r;
    r.epoch = 0;
    r.phase = "calibration";
    r.action = "calibrate";
    r.train_loss = cal.epoch.mean_loss;
    r.lambda_applied = cfg.lambda;
    r.accuracy = cal.accuracy;
    r.gap = tolerance_gap(cal.accuracy, E, cfg.epsilon);
    r.next_lambda_A = adaptive_lambda(cal.accuracy, E, cfg.epsilon, cfg.lambda);
    r.layers = detail::layer_summaries(model, cal.partition, cal.epoch);
    state.lambda_A = r.next_lambda_A;
    state.gap = r.gap;
    if (cal.accuracy >= state.tolerance_floor()) {
      state.last_good_accuracy = cal.accuracy;
      state.last_good_epoch = 0;
      snapshot(0);
      r.checkpointed = true;
    }
    detail::fill_accounting(r, model);
    rep.epochs.push_back(r);
    if (hooks.on_epoch)
      hooks.on_epoch(r);
  }

  bool stopped = false;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !stopped; ++epoch) {
    EpochRecord r;
    r.epoch = epoch;
    r.phase = "game";
    r.lambda_applied = state.lambda_A;
    const Partition part = partition_model(model, cfg.alpha);
    Decision d;
    try {
      const auto st = penalized_epoch(model, part, state.lambda_A, ws.train, sgd, rng);
      r.train_loss = st.mean_loss;
      r.layers = detail::layer_summaries(model, part, st);
      double acc = evaluate(model, ws.validation);
      if (hooks.accuracy_override)
        acc = hooks.accuracy_override(epoch, acc);
      r.accuracy = acc;
      d = controller_update(state, acc, epoch);
    } catch (const NumericalError &e) {
      r.numerical_failure = true;
      r.accuracy = evaluate(model, ws.validation);
      rep.warnings.push_back("epoch " + std::to_string(epoch) +
                             ": numerical failure, epoch-start weights restored: " + e.what());
      d = controller_force_recover(state);
    }
    r.gap = d.gap;
    r.action = action_name(d.action);
    r.next_lambda_A = d.lambda_A;
    r.W_A = d.W_A;
    if (d.checkpoint) {
      snapshot(epoch);
      r.checkpointed = true;
    }

    switch (d.action) {
    case Action::Prune: {
      auto res = prune_step(model, part, d.W_A);
      if (!res.removed.empty()) {
        model = std::move(res.model);
        sgd.reset();
      }
      r.removed = std::move(res.removed);
      break;
    }
    case Action::Recover: break;
    case Action::Rollback: {
      stopped = true;
      rep.stop_reason = "rollback";
      if (d.can_restore && last_good) {
        auto restored = checkpoint_restore(*last_good);
        model = std::move(restored.model);
        rng.set_state(restored.rng_state);
        rep.restored = true;
      } else {
        rep.warnings.push_back("rollback requested without a last-good checkpoint; "
                               "keeping the current model");
      }
      break;
    }
    }
    detail::fill_accounting(r, model);
    rep.epochs.push_back(r);
    if (hooks.on_epoch)
      hooks.on_epoch(rep.epochs.back());
  }
  if (!stopped)
    rep.stop_reason = "max_epochs";

  rep.last_good_epoch = state.last_good_epoch;
  rep.last_good_accuracy = state.last_good_accuracy;
  double final_acc = evaluate(model, ws.validation);
  if (!rep.restored && final_acc < state.tolerance_floor() && last_good) {
    auto restored = checkpoint_restore(*last_good);
    model = std::move(restored.model);
    rep.restored = true;
    final_acc = evaluate(model, ws.validation);
  }
  rep.final_checkpoint = checkpoint_save(model, &state, &rng, "{\"final\":true}");
  detail::finish_report(rep, std::move(model), ws, final_acc);
  return rep;
}

/// Removal set that drops the globally least important filters (by |f|,
/// ties: lower layer, then lower index) until FLOPs fall by at least
/// `target_percent`, never emptying a layer. Returns the set and whether
/// the target was reached.
inline std::pair<FilterRemovals, bool>
plan_one_shot(const NetworkModel &model, double target_percent) {
  PLAYPRUNE_CHECK(target_percent >= 0.0 && target_percent < 100.0,
                  "oneshot: target FLOPs reduction must lie in [0,100), got ",
                  target_percent);
  const std::uint64_t base = count_flops(model);
  const double goal = static_cast<double>(base) * (1.0 - target_percent / 100.0);
  struct Candidate {
    double norm;
    std::size_t layer, filter;
  };
  std::vector<Candidate> all;
  for (auto i : model.prunable_layers()) {
    const auto norms = filter_norms(model.layer(i));
    for (std::size_t j = 0; j < norms.size(); ++j)
      all.push_back({norms[j], i, j});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Candidate &a, const Candidate &b) { return a.norm < b.norm; });
  std::vector<std::size_t> counts(model.size(), 0);
  for (std::size_t i = 0; i < model.size(); ++i)
    counts[i] = model.layer(i).units();
  FilterRemovals plan;
  if (static_cast<double>(base) <= goal)
    return {plan, true};
  for (const auto &c : all) {
    if (counts[c.layer] <= 1)
      continue;
    --counts[c.layer];
    plan[c.layer].insert(c.filter);
    if (static_cast<double>(flops_with_filter_counts(model, counts)) <= goal)
      return {plan, true};
  }
  return {plan, false};
}

/// One-shot baseline: prune to the FLOPs target in a single step, then
/// fine-tune (plain SGD) for `finetune_epochs`.
inline PruneReport one_shot_baseline(const CampaignConfig &cfg, const Workspace &ws,
                                     Baseline baseline, double target_percent,
                                     std::size_t finetune_epochs,
                                     const CampaignHooks &hooks = {}) {
  cfg.validate();
  PruneReport rep;
  rep.kind = "oneshot";
  rep.target_flops_reduction = target_percent;
  NetworkModel model = std::move(baseline.model);
  Rng rng = baseline.rng;
  detail::begin_report(rep, cfg, model, baseline.accuracy, ws);

  auto [plan, reached] = plan_one_shot(model, target_percent);
  rep.target_reached = reached;
  if (!reached)
    rep.warnings.push_back("FLOPs target unreachable: every eligible layer is at its one-filter floor");
  if (!plan.empty())
    model = remove_filters(model, plan);

  Sgd sgd(cfg.optimizer);
  for (std::size_t e = 1; e <= finetune_epochs; ++e) {
    EpochRecord r;
    r.epoch = e;
    r.phase = "finetune";
    r.action = "finetune";
    if (e == 1)
      r.removed = plan;
    try {
      r.train_loss = train_epoch(model, ws.train, sgd, rng).mean_loss;
    } catch (const NumericalError &err) {
      r.numerical_failure = true;
      rep.warnings.push_back(std::string("finetune numerical failure: ") + err.what());
    }
    r.accuracy = evaluate(model, ws.validation);
    detail::fill_accounting(r, model);
    rep.epochs.push_back(r);
    if (hooks.on_epoch)
      hooks.on_epoch(r);
  }
  rep.stop_reason = "budget";
  const double acc = evaluate(model, ws.validation);
  rep.final_checkpoint = checkpoint_save(model, nullptr, &rng, "{\"oneshot\":true}");
  detail::finish_report(rep, std::move(model), ws, acc);
  return rep;
}

} // namespace playprune

#endif // PLAYPRUNE_ORCHESTRATOR_HPP
