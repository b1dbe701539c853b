#ifndef PLAYPRUNE_REPORT_HPP
#define PLAYPRUNE_REPORT_HPP

// Machine-readable campaign output: one JSON record per epoch (JSON lines),
// a summary document, and columnar CSV series for plotting. Nothing
// time- or path-dependent is written, so identical runs give identical bytes.

#include "orchestrator.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

namespace playprune {

using json = nlohmann::ordered_json;

inline constexpr int kReportVersion = 1;

namespace detail {

inline json to_json(const NormSummary &s) {
  return {{"count", s.count}, {"min", s.min}, {"max", s.max}, {"mean", s.mean}};
}

inline json to_json(const FilterCensus &c) {
  json layers = json::array();
  for (std::size_t k = 0; k < c.layers.size(); ++k)
    layers.push_back({{"layer", c.layers[k]}, {"filters", c.filters[k]}});
  return {{"total", c.total}, {"layers", layers}};
}

inline json thresholds_json(const std::vector<std::size_t> &layers,
                            const std::vector<double> &values) {
  json out = json::array();
  for (std::size_t k = 0; k < layers.size(); ++k)
    out.push_back({{"layer", layers[k]}, {"value", values[k]}});
  return out;
}

inline json to_json(const FilterRemovals &r) {
  json out = json::array();
  for (const auto &[layer, set] : r) {
    json idx = json::array();
    for (auto j : set)
      idx.push_back(j);
    out.push_back({{"layer", layer}, {"filters", idx}});
  }
  return out;
}

inline json optional_json(const auto &v) {
  return v ? json(*v) : json(nullptr);
}

} // namespace detail

inline json epoch_json(const EpochRecord &r) {
  json layers = json::array();
  for (const auto &l : r.layers)
    layers.push_back({{"layer", l.layer},
                      {"name", l.name},
                      {"unimportant", l.unimportant},
                      {"u_norms", detail::to_json(l.u_after)},
                      {"i_norms", detail::to_json(l.i_after)}});
  return {{"epoch", r.epoch},
          {"phase", r.phase},
          {"train_loss", r.train_loss},
          {"lambda_applied", r.lambda_applied},
          {"accuracy", r.accuracy},
          {"gap", r.gap},
          {"action", r.action},
          {"next_lambda_A", r.next_lambda_A},
          {"W_A", detail::thresholds_json(r.W_A.layers, r.W_A.values)},
          {"layers", layers},
          {"removed", detail::to_json(r.removed)},
          {"numerical_failure", r.numerical_failure},
          {"checkpointed", r.checkpointed},
          {"census", detail::to_json(r.census)},
          {"params", r.params},
          {"flops", r.flops}};
}

inline json summary_json(const PruneReport &rep) {
  FilterRemovals all;
  for (const auto &e : rep.epochs)
    for (const auto &[layer, set] : e.removed)
      all[layer].insert(set.begin(), set.end());
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(rep.final_model_hash));
  json warnings = json::array();
  for (const auto &w : rep.warnings)
    warnings.push_back(w);
  return {
      {"version", kReportVersion},
      {"kind", rep.kind},
      {"seed", rep.seed},
      {"controller",
       {{"epsilon", rep.epsilon},
        {"alpha", rep.alpha},
        {"lambda", rep.lambda},
        {"delta_w", rep.delta_w},
        {"tau0", rep.tau0},
        {"recovery_patience", rep.recovery_patience}}},
      {"baseline",
       {{"accuracy", rep.baseline_accuracy},
        {"test_accuracy", rep.baseline_test_accuracy},
        {"params", rep.baseline_params},
        {"flops", rep.baseline_flops},
        {"census", detail::to_json(rep.baseline_census)}}},
      {"thresholds", detail::thresholds_json(rep.thresholds.layers, rep.thresholds.values)},
      {"epochs_run", rep.epochs_run()},
      {"stop_reason", rep.stop_reason},
      {"restored", rep.restored},
      {"last_good_epoch", detail::optional_json(rep.last_good_epoch)},
      {"last_good_accuracy", detail::optional_json(rep.last_good_accuracy)},
      {"final",
       {{"accuracy", rep.final_accuracy},
        {"test_accuracy", rep.final_test_accuracy},
        {"test_error", 100.0 - rep.final_test_accuracy},
        {"params", rep.final_params},
        {"flops", rep.final_flops},
        {"census", detail::to_json(rep.final_census)},
        {"model_hash", hash}}},
      {"reduction",
       {{"filters_percent", rep.filter_reduction()},
        {"params_percent", rep.params_reduction()},
        {"flops_percent", rep.flops_reduction()},
        {"params_ratio", rep.final_params ? double(rep.baseline_params) / double(rep.final_params) : 0.0},
        {"flops_ratio", rep.final_flops ? double(rep.baseline_flops) / double(rep.final_flops) : 0.0}}},
      {"target_flops_reduction", rep.target_flops_reduction},
      {"target_reached", rep.target_reached},
      {"removed", detail::to_json(all)},
      {"warnings", warnings}};
}

inline std::string epochs_jsonl(const PruneReport &rep) {
  std::string out;
  for (const auto &e : rep.epochs) {
    out += epoch_json(e).dump();
    out += '\n';
  }
  return out;
}

inline std::string summary_text(const PruneReport &rep) {
  return summary_json(rep).dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// CSV series, rendered from the JSON form so `report` can work from files.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string num(const json &v) {
  if (v.is_null())
    return "";
  if (v.is_number_float()) {
    std::ostringstream s;
    s.precision(10);
    s << v.get<double>();
    return s.str();
  }
  return v.dump();
}

} // namespace detail

/// epoch,phase,action,accuracy,gap,lambda_applied,next_lambda_A,train_loss,filters,params,flops,removed
inline std::string epochs_csv(const std::vector<json> &epochs) {
  std::string out =
      "epoch,phase,action,accuracy,gap,lambda_applied,next_lambda_A,train_loss,"
      "filters,params,flops,removed\n";
  for (const auto &e : epochs) {
    std::size_t removed = 0;
    for (const auto &l : e.at("removed"))
      removed += l.at("filters").size();
    out += detail::num(e.at("epoch")) + "," + e.at("phase").get<std::string>() + "," +
           e.at("action").get<std::string>() + "," + detail::num(e.at("accuracy")) + "," +
           detail::num(e.at("gap")) + "," + detail::num(e.at("lambda_applied")) + "," +
           detail::num(e.at("next_lambda_A")) + "," + detail::num(e.at("train_loss")) + "," +
           detail::num(e.at("census").at("total")) + "," + detail::num(e.at("params")) + "," +
           detail::num(e.at("flops")) + "," + std::to_string(removed) + "\n";
  }
  return out;
}

/// Long format: epoch,layer,filters
inline std::string census_csv(const std::vector<json> &epochs) {
  std::string out = "epoch,layer,filters\n";
  for (const auto &e : epochs)
    for (const auto &l : e.at("census").at("layers"))
      out += detail::num(e.at("epoch")) + "," + detail::num(l.at("layer")) + "," +
             detail::num(l.at("filters")) + "\n";
  return out;
}

inline std::string two_column_csv(const std::vector<json> &epochs, const char *header,
                                  const std::function<json(const json &)> &value) {
  std::string out = std::string("epoch,") + header + "\n";
  for (const auto &e : epochs)
    out += detail::num(e.at("epoch")) + "," + detail::num(value(e)) + "\n";
  return out;
}

inline std::vector<json> parse_jsonl(const std::string &text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (detail::trim(line).empty())
      continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error &e) {
      detail::fail("epochs report line ", n, ": ", e.what());
    }
  }
  return out;
}

inline std::string read_text(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  PLAYPRUNE_CHECK(in.good(), "cannot open ", path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_text(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  PLAYPRUNE_CHECK(out.good(), "cannot write ", path);
  out << text;
  PLAYPRUNE_CHECK(out.good(), "write failed: ", path);
}

/// Writes epochs.jsonl, summary.json and the CSV series into `dir`.
inline void write_report(const PruneReport &rep, const std::string &dir) {
  write_text(dir + "/epochs.jsonl", epochs_jsonl(rep));
  write_text(dir + "/summary.json", summary_text(rep));
  const auto epochs = parse_jsonl(epochs_jsonl(rep));
  write_text(dir + "/epochs.csv", epochs_csv(epochs));
  write_text(dir + "/census.csv", census_csv(epochs));
}

} // namespace playprune

#endif // PLAYPRUNE_REPORT_HPP
