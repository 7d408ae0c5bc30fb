/*
 * Copyright 2026 The BrainOOD Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: parses the config file and flags, dispatches to a
// subcommand, and turns failures into "brainood: error: <code>: <message>" on
// stderr with a nonzero exit status.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "brainood/cli/commands.hpp"
#include "brainood/cli/run_config.hpp"
#include "brainood/cli/selftest.hpp"
#include "brainood/common/error.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  std::optional<std::string> manifest;
  std::optional<std::string> splits;
  std::optional<std::string> checkpoint;
  std::optional<std::size_t> fold;
  std::vector<std::string> ablate;
  std::vector<std::string> set;
};

brainood::cli::RunConfig resolve(const Flags& f) {
  using namespace brainood::cli;
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  for (const std::string& kv : f.set) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw brainood::Error(brainood::ErrorCode::kInvalidArgument, "--set expects KEY=VALUE, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.jobs) cfg.jobs = *f.jobs;
  if (f.mode) cfg.eval_mode = parse_eval_mode(*f.mode);
  if (f.out) cfg.paths.output_dir = *f.out;
  if (f.manifest) cfg.paths.manifest = *f.manifest;
  if (f.splits) cfg.paths.splits = *f.splits;
  if (f.checkpoint) cfg.paths.checkpoint = *f.checkpoint;
  if (f.fold) cfg.fold = *f.fold;
  for (const std::string& a : f.ablate) apply_ablation(cfg.train, a);
  cfg.propagate_seed();
  return cfg;
}

int fail(const std::string& code, const std::string& message) {
  std::cerr << "brainood: error: " << code << ": " << message << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Brain-network OOD classification: data generation, training, evaluation and interpretation"};
  app.require_subcommand(1);
  Flags flags;

  app.add_option("--config", flags.config, "TOML-style key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Root seed for generation, splitting and training");
  app.add_option("--jobs", flags.jobs, "Parallel folds for cv")->check(CLI::PositiveNumber);
  app.add_option("--mode", flags.mode, "Evaluation sampling: soft (noise-free) or hard")
      ->check(CLI::IsMember({"soft", "hard"}));
  app.add_option("--out", flags.out, "Output directory");
  app.add_option("--manifest", flags.manifest, "Dataset manifest (paths.manifest)");
  app.add_option("--splits", flags.splits, "Split plan (paths.splits)");
  app.add_option("--checkpoint", flags.checkpoint, "Checkpoint file (paths.checkpoint)");
  app.add_option("--fold", flags.fold, "Fold used by train, eval and interpret (split.fold)");
  app.add_option("--ablate", flags.ablate, "Disable or replace a component (repeatable)")
      ->check(CLI::IsMember(brainood::cli::ablation_names()))
      ->allow_extra_args(false);
  app.add_option("--set", flags.set, "Override one config key: KEY=VALUE (repeatable)")->allow_extra_args(false);

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const brainood::cli::RunConfig&, std::ostream&);
  };
  const std::vector<Command> commands{
      {"generate", "Write a synthetic multi-site dataset", brainood::cli::cmd_generate},
      {"split", "Write a site-holdout split plan", brainood::cli::cmd_split},
      {"train", "Train one fold", brainood::cli::cmd_train},
      {"eval", "Evaluate a checkpoint on a fold", brainood::cli::cmd_eval},
      {"cv", "Train and evaluate every fold", brainood::cli::cmd_cv},
      {"interpret", "Edge score map and top edges of a checkpoint", brainood::cli::cmd_interpret},
  };
  std::vector<CLI::App*> subs;
  for (const Command& c : commands) subs.push_back(app.add_subcommand(c.name, c.help)->fallthrough());
  CLI::App* selftest = app.add_subcommand("selftest", "Gradient, oracle and determinism checks")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "brainood: error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    const brainood::cli::RunConfig cfg = resolve(flags);
    if (*selftest) {
      const brainood::cli::SelftestReport report = brainood::cli::run_selftest();
      brainood::cli::print_selftest(report, std::cout);
      if (!report.passed()) return fail("selftest", "one or more checks failed");
      return 0;
    }
    for (std::size_t i = 0; i < commands.size(); ++i)
      if (*subs[i]) commands[i].run(cfg, std::cout);
    return 0;
  } catch (const brainood::Error& e) {
    return fail(brainood::error_code_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
}
