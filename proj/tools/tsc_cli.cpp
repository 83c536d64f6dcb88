#include <cstdint>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"

#include "tsc/harness.hpp"
#include "tsc/version.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "Experiment config file (JSON)")
      ->check(CLI::ExistingFile);
  cmd->add_option("-s,--seed", args.seed, "Root seed override");
  cmd->add_option("-o,--out", args.out_dir, "Output directory override");
  cmd->add_flag("-q,--quiet", args.quiet, "Suppress progress output");
}

tsc::ExperimentConfig load(const CommonArgs& args) {
  if (args.config_path.empty()) return tsc::ExperimentConfig{};
  return tsc::load_config_file(args.config_path);
}

tsc::RunOptions options_of(const CommonArgs& args) {
  return {args.seed, args.out_dir, args.quiet};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic-signal control: simulation, learning and verification"};
  app.set_version_flag("--version", tsc::kVersion);
  app.require_subcommand(1);

  CommonArgs train_args, verify_args, baseline_args, mdp_args;
  std::string show_path;

  CLI::App* train = app.add_subcommand("train", "Run one learning episode and save its artifacts");
  add_common(train, train_args);

  CLI::App* verify = app.add_subcommand("verify", "Audit the convergence conditions numerically");
  add_common(verify, verify_args);

  CLI::App* baselines =
      app.add_subcommand("baselines", "Score the learned policy against fixed and random ones");
  add_common(baselines, baseline_args);

  CLI::App* make_mdp =
      app.add_subcommand("make-mdp", "Estimate one junction's explicit decision process");
  add_common(make_mdp, mdp_args);

  CLI::App* show = app.add_subcommand("show", "Summarize any artifact produced by this tool");
  show->add_option("file", show_path, "Artifact to inspect")->required();

  int status = 0;
  train->callback([&] { tsc::run_train(load(train_args), options_of(train_args), std::cout); });
  verify->callback([&] {
    const tsc::VerifyOutcome outcome =
        tsc::run_verify(load(verify_args), options_of(verify_args), std::cout);
    if (!outcome.all_passed()) status = 2;
  });
  baselines->callback(
      [&] { tsc::run_baselines(load(baseline_args), options_of(baseline_args), std::cout); });
  make_mdp->callback(
      [&] { tsc::run_make_mdp(load(mdp_args), options_of(mdp_args), std::cout); });
  show->callback([&] {
    if (!tsc::show_file(show_path, std::cout)) {
      std::cerr << "error: unrecognized file format: " << show_path << '\n';
      status = 1;
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return status;
}
