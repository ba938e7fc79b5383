// owgan command-line driver: train | tournament | eval | plot.

#include <iostream>

#include "CLI11.hpp"
#include "owgan/owgan.hpp"

int main(int argc, char** argv) {
  using namespace owgan;
  CLI::App app{"Orthogonality-regularized WGAN training and evaluation"};
  app.require_subcommand(1);

  cli::TrainOptions train_opt;
  std::uint64_t seed = 0;
  double budget = 0.0;
  auto* train_cmd = app.add_subcommand("train", "train one model");
  train_cmd->add_option("--config", train_opt.config, "key = value run config")->required();
  train_cmd->add_option("--out", train_opt.out, "output directory")->required();
  auto* seed_flag = train_cmd->add_option("--seed-override", seed, "replace the config seed");
  auto* budget_flag = train_cmd->add_option("--budget-seconds", budget, "wall-clock budget");

  cli::TournamentOptions tour_opt;
  auto* tour_cmd = app.add_subcommand("tournament", "cross-evaluate trained models");
  tour_cmd->add_option("--checkpoint", tour_opt.checkpoints, "checkpoint.json (repeat)")->required();
  tour_cmd->add_option("--config", tour_opt.config, "data/eval config");
  tour_cmd->add_option("--out", tour_opt.out, "output directory")->required();

  cli::EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate one checkpoint");
  eval_cmd->add_option("--checkpoint", eval_opt.checkpoint, "checkpoint.json")->required();
  eval_cmd->add_option("--which", eval_opt.which, "lipschitz|gram|spectrum|ndb|gradnorm")->required();
  eval_cmd->add_option("--config", eval_opt.config, "data/eval config");
  eval_cmd->add_option("--out", eval_opt.out, "output directory")->required();

  cli::PlotOptions plot_opt;
  auto* plot_cmd = app.add_subcommand("plot", "scatter real vs generated samples to PNG");
  plot_cmd->add_option("--samples", plot_opt.samples, "CSV with x,y,source");
  plot_cmd->add_option("--checkpoint", plot_opt.checkpoint, "checkpoint.json");
  plot_cmd->add_option("--config", plot_opt.config, "data/eval config");
  plot_cmd->add_option("--out", plot_opt.out, "output PNG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kExitUsage;
  }

  try {
    if (*train_cmd) {
      if (*seed_flag) train_opt.seed_override = seed;
      if (*budget_flag) train_opt.budget_seconds = budget;
      return cli::cmd_train(train_opt, std::cout);
    }
    if (*tour_cmd) return cli::cmd_tournament(tour_opt, std::cout);
    if (*eval_cmd) return cli::cmd_eval(eval_opt, std::cout);
    return cli::cmd_plot(plot_opt, std::cout);
  } catch (const DivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitUsage;
  }
}
