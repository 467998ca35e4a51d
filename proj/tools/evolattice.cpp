#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evolattice/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"evolattice: persistent internal-population evolution over expression lattices"};
  app.require_subcommand(1);

  std::string config_path;
  bool dry_run = false;
  auto* run = app.add_subcommand("run", "execute a run from a config file");
  run->add_option("config", config_path, "path to the JSON run config")->required();
  run->add_flag("--dry-run", dry_run, "validate the config and print resolved defaults");

  std::string snapshot_path;
  std::vector<std::string> inputs;
  auto* inspect = app.add_subcommand("inspect", "validate a snapshot and report structure");
  inspect->add_option("snapshot", snapshot_path, "path to a .lattice snapshot")->required();
  inspect->add_option("--inputs", inputs, "declared task inputs (default: inferred)")
      ->delimiter(',');

  std::string old_path, new_path;
  auto* diff = app.add_subcommand("diff", "unified diff between two snapshots");
  diff->add_option("old", old_path, "previous snapshot")->required();
  diff->add_option("new", new_path, "mutated snapshot")->required();

  std::string stats_path;
  std::vector<std::string> stats_inputs;
  auto* stats = app.add_subcommand("stats", "per-alternative statistics stored in a snapshot");
  stats->add_option("snapshot", stats_path, "path to a .lattice snapshot")->required();
  stats->add_option("--inputs", stats_inputs, "declared task inputs (default: inferred)")
      ->delimiter(',');

  std::string run_dir;
  auto* replay = app.add_subcommand("replay", "re-run from transcripts and verify metrics");
  replay->add_option("dir", run_dir, "completed run directory")->required();

  auto* tasks = app.add_subcommand("tasks", "task utilities");
  std::string export_task, export_config, export_out;
  auto* tasks_export = tasks->add_subcommand("export", "write generated task batches as CSV");
  tasks_export->add_option("--task", export_task, "task name (ranking|optimizer|regression)");
  tasks_export->add_option("--config", export_config, "run config supplying task parameters");
  tasks_export->add_option("--out", export_out, "output file (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return evolattice::cli::cmd_run(config_path, dry_run);
  if (inspect->parsed()) return evolattice::cli::cmd_inspect(snapshot_path, inputs);
  if (diff->parsed()) return evolattice::cli::cmd_diff(old_path, new_path);
  if (stats->parsed()) return evolattice::cli::cmd_stats(stats_path, stats_inputs);
  if (replay->parsed()) return evolattice::cli::cmd_replay(run_dir);
  if (tasks->parsed() && tasks_export->parsed())
    return evolattice::cli::cmd_tasks_export(export_task, export_config, export_out);
  return 2;
}
