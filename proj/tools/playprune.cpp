// playprune: train, prune and inspect small CNNs from the command line.

#include "playprune/report.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace playprune;

namespace {

struct Overrides {
  std::string config;
  std::string out = "playprune_out";
  std::optional<double> epsilon, alpha, lambda, delta_w;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_epochs;
  bool quiet = false;
};

void add_campaign_flags(CLI::App *cmd, Overrides &o) {
  cmd->add_option("--config", o.config, "campaign config file")->required();
  cmd->add_option("--epsilon", o.epsilon, "accuracy tolerance, percentage points");
  cmd->add_option("--alpha", o.alpha, "percent of filters per layer marked unimportant");
  cmd->add_option("--lambda", o.lambda, "group-sparsity strength");
  cmd->add_option("--delta-w", o.delta_w, "threshold scale");
  cmd->add_option("--seed", o.seed, "random seed (falls back to PP_SEED)");
  cmd->add_option("--max-epochs", o.max_epochs, "game epoch limit");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_flag("--quiet", o.quiet, "no per-epoch progress");
}

std::optional<std::uint64_t> env_seed() {
  const char *s = std::getenv("PP_SEED");
  if (!s || !*s)
    return std::nullopt;
  return static_cast<std::uint64_t>(parse_size("PP_SEED", s));
}

// Relative data paths are taken relative to the config file.
void resolve_data_paths(DataConfig &d, const std::string &config) {
  const fs::path dir = fs::path(config).parent_path();
  auto fix = [&](std::string &p) {
    if (!p.empty() && fs::path(p).is_relative())
      p = (dir / p).string();
  };
  for (auto *p : {&d.train_images, &d.train_labels, &d.test_images, &d.test_labels, &d.test_file})
    fix(*p);
  for (auto &p : d.train_files)
    fix(p);
}

CampaignConfig load_campaign(const Overrides &o) {
  const auto doc = ConfigDocument::load(o.config);
  CampaignConfig cfg = parse_campaign(doc, env_seed());
  resolve_data_paths(cfg.data, o.config);
  if (o.epsilon) cfg.epsilon = *o.epsilon;
  if (o.alpha) cfg.alpha = *o.alpha;
  if (o.lambda) cfg.lambda = *o.lambda;
  if (o.delta_w) cfg.delta_w = *o.delta_w;
  if (o.seed) cfg.seed = *o.seed;
  if (o.max_epochs) cfg.max_epochs = *o.max_epochs;
  cfg.validate();
  return cfg;
}

/// Trains a baseline, or loads [campaign] baseline_checkpoint when set.
Baseline obtain_baseline(const Overrides &o, const CampaignConfig &cfg,
                         const Workspace &ws) {
  const auto doc = ConfigDocument::load(o.config);
  if (auto path = doc.get("campaign", "baseline_checkpoint")) {
    fs::path p = *path;
    if (p.is_relative())
      p = fs::path(o.config).parent_path() / p;
    auto contents = checkpoint_restore(Checkpoint::read(p.string()));
    Baseline b;
    b.model = std::move(contents.model);
    b.rng = Rng(cfg.seed);
    b.accuracy = evaluate(b.model, ws.validation);
    if (!o.quiet)
      std::cerr << "loaded baseline " << p.string() << "\n";
    return b;
  }
  return train_baseline(cfg, ws, [&](std::size_t e, double loss, double acc) {
    if (!o.quiet)
      std::cerr << "baseline epoch " << e << "  loss " << loss << "  val " << acc << "%\n";
  });
}

void print_epoch(const EpochRecord &r) {
  std::cerr << std::fixed << std::setprecision(2) << "epoch " << std::setw(3) << r.epoch
            << "  " << std::setw(8) << r.action << "  val " << r.accuracy << "%  gap "
            << r.gap << "  filters " << r.census.total << "  flops " << r.flops << "\n";
  std::cerr.unsetf(std::ios::floatfield);
}

void print_summary(const PruneReport &rep) {
  std::cout << std::fixed << std::setprecision(2);
  std::cout << "baseline accuracy  " << rep.baseline_accuracy << "%\n"
            << "final accuracy     " << rep.final_accuracy << "% (test "
            << rep.final_test_accuracy << "%)\n"
            << "filters            " << rep.baseline_census.total << " -> "
            << rep.final_census.total << " (-" << rep.filter_reduction() << "%)\n"
            << "params             " << rep.baseline_params << " -> " << rep.final_params
            << " (-" << rep.params_reduction() << "%)\n"
            << "flops              " << rep.baseline_flops << " -> " << rep.final_flops
            << " (-" << rep.flops_reduction() << "%)\n"
            << "epochs             " << rep.epochs_run() << " (" << rep.stop_reason << ")\n";
  for (const auto &w : rep.warnings)
    std::cout << "warning: " << w << "\n";
}

int cmd_train(const Overrides &o) {
  const auto cfg = load_campaign(o);
  const auto ws = prepare_workspace(cfg);
  auto b = obtain_baseline(o, cfg, ws);
  fs::create_directories(o.out);
  const auto path = (fs::path(o.out) / "baseline.ppck").string();
  checkpoint_save(b.model, nullptr, &b.rng, "baseline").write(path);
  std::cout << std::fixed << std::setprecision(2) << "validation accuracy " << b.accuracy
            << "%\ncheckpoint " << path << "\n";
  return 0;
}

int cmd_prune(const Overrides &o) {
  const auto cfg = load_campaign(o);
  const auto ws = prepare_workspace(cfg);
  auto b = obtain_baseline(o, cfg, ws);
  const fs::path out = o.out;
  fs::create_directories(out / "checkpoints");
  CampaignHooks hooks;
  hooks.on_checkpoint = [&](const Checkpoint &ck, std::size_t epoch) {
    ck.write((out / "checkpoints" / ("epoch_" + std::to_string(epoch) + ".ppck")).string());
    ck.write((out / "last_good.ppck").string());
  };
  if (!o.quiet)
    hooks.on_epoch = print_epoch;
  const auto rep = run_game(cfg, ws, std::move(b), hooks);
  rep.final_checkpoint->write((out / "final.ppck").string());
  write_report(rep, out.string());
  print_summary(rep);
  return 0;
}

int cmd_oneshot(const Overrides &o, double target, std::optional<std::size_t> epochs) {
  const auto cfg = load_campaign(o);
  const auto ws = prepare_workspace(cfg);
  auto b = obtain_baseline(o, cfg, ws);
  CampaignHooks hooks;
  if (!o.quiet)
    hooks.on_epoch = print_epoch;
  // Default budget matches a full game: calibration epoch plus max_epochs.
  const auto rep = one_shot_baseline(cfg, ws, std::move(b), target,
                                     epochs.value_or(cfg.max_epochs + 1), hooks);
  fs::create_directories(o.out);
  rep.final_checkpoint->write((fs::path(o.out) / "final.ppck").string());
  write_report(rep, o.out);
  print_summary(rep);
  return 0;
}

int cmd_eval(const std::string &config, const std::string &ckpt, const std::string &split) {
  const auto doc = ConfigDocument::load(config);
  auto cfg = parse_campaign(doc, env_seed());
  resolve_data_paths(cfg.data, config);
  const auto ws = prepare_workspace(cfg);
  auto contents = checkpoint_restore(Checkpoint::read(ckpt));
  const DatasetSplit *data = split == "validation" ? &ws.validation
                             : split == "test"     ? &ws.test
                                                   : &ws.train;
  const double acc = evaluate(contents.model, *data);
  std::cout << std::fixed << std::setprecision(4) << split << " accuracy " << acc << "%\n";
  return 0;
}

int cmd_account(const std::string &config, const std::string &ckpt, bool as_json) {
  NetworkModel model;
  if (!ckpt.empty()) {
    model = checkpoint_restore(Checkpoint::read(ckpt)).model;
  } else {
    PLAYPRUNE_CHECK(!config.empty(), "account: give --config or --checkpoint");
    const auto arch = parse_architecture(ConfigDocument::load(config));
    Rng rng(0);
    model = build_model(arch, rng, Init::Zero);
  }
  const auto params = count_params(model);
  const auto flops = count_flops(model);
  const auto census = filter_census(model);
  if (as_json) {
    std::cout << json{{"params", params}, {"flops", flops}, {"filters", census.total}}.dump()
              << "\n";
    return 0;
  }
  std::cout << std::fixed << std::setprecision(2) << "params  " << params << " ("
            << double(params) / 1e6 << "M)\nflops   " << flops << " (" << double(flops) / 1e6
            << "M)\nfilters " << census.total << "\n";
  return 0;
}

int cmd_report(const std::string &in, const std::string &out) {
  const auto epochs = parse_jsonl(read_text((fs::path(in) / "epochs.jsonl").string()));
  fs::create_directories(out);
  const fs::path o = out;
  write_text((o / "epochs.csv").string(), epochs_csv(epochs));
  write_text((o / "census.csv").string(), census_csv(epochs));
  write_text((o / "accuracy.csv").string(),
             two_column_csv(epochs, "accuracy", [](const json &e) { return e.at("accuracy"); }));
  write_text((o / "flops.csv").string(),
             two_column_csv(epochs, "flops", [](const json &e) { return e.at("flops"); }));
  std::cout << "wrote " << epochs.size() << " epochs to " << out << "\n";
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"playprune: iterative filter pruning for small CNNs"};
  app.require_subcommand(1);

  Overrides train_o, prune_o, oneshot_o;
  auto *train = app.add_subcommand("train", "train a baseline model to a checkpoint");
  add_campaign_flags(train, train_o);
  auto *prune = app.add_subcommand("prune", "run a prune/recover campaign");
  add_campaign_flags(prune, prune_o);
  auto *oneshot = app.add_subcommand("oneshot", "one-step pruning baseline plus fine-tuning");
  add_campaign_flags(oneshot, oneshot_o);
  double target = 0.0;
  std::optional<std::size_t> ft_epochs;
  oneshot->add_option("--target", target, "FLOPs reduction to reach, percent")->required();
  oneshot->add_option("--finetune-epochs", ft_epochs, "fine-tuning epochs");

  std::string eval_cfg, eval_ckpt, eval_split = "validation";
  auto *eval = app.add_subcommand("eval", "accuracy of a checkpoint");
  eval->add_option("--config", eval_cfg, "campaign config (for the dataset)")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--split", eval_split, "validation | test | train")
      ->check(CLI::IsMember({"validation", "test", "train"}));

  std::string acc_cfg, acc_ckpt;
  bool acc_json = false;
  auto *account = app.add_subcommand("account", "parameter and FLOP counts");
  account->add_option("--config", acc_cfg, "architecture config");
  account->add_option("--checkpoint", acc_ckpt, "checkpoint file");
  account->add_flag("--json", acc_json, "print JSON");

  std::string rep_in, rep_out;
  auto *report = app.add_subcommand("report", "CSV and plot series from a campaign directory");
  report->add_option("--in", rep_in, "campaign output directory")->required();
  report->add_option("--out", rep_out, "destination directory (default: --in)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() ? e.get_exit_code() : 2;
  }

  try {
    if (*train) return cmd_train(train_o);
    if (*prune) return cmd_prune(prune_o);
    if (*oneshot) return cmd_oneshot(oneshot_o, target, ft_epochs);
    if (*eval) return cmd_eval(eval_cfg, eval_ckpt, eval_split);
    if (*account) return cmd_account(acc_cfg, acc_ckpt, acc_json);
    if (*report) return cmd_report(rep_in, rep_out.empty() ? rep_in : rep_out);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
