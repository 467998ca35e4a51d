#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "evolattice/run_config.hpp"

namespace evolattice::cli {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Loads a snapshot with explicit task inputs, or infers them: any parameter
// that does not name a node is treated as a task input.
inline Lattice load_snapshot(const std::string& text, std::vector<std::string> inputs) {
  if (!inputs.empty()) return deserialize_snapshot(text, std::move(inputs));
  Lattice l = deserialize_snapshot(text, {});
  std::set<std::string> inferred;
  for (const auto& n : l.nodes)
    for (const auto& a : n.alternatives)
      for (const auto& p : a.params)
        if (l.find(p) == nullptr) inferred.insert(p);
  l.task_inputs.assign(inferred.begin(), inferred.end());
  return l;
}

inline int cmd_run(const std::string& config_path, bool dry_run, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  RunConfig config;
  try {
    config = RunConfig::load(config_path);
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return 2;
  }
  if (dry_run) {
    out << config.to_json().dump(2) << "\n";
    return 0;
  }
  try {
    auto task = config.make_task();
    auto oracle = config.make_oracle();
    fs::path dir(config.output_dir);
    fs::create_directories(dir);
    detail::write_file(dir / "config.json", config.to_json().dump(2) + "\n");

    auto started = std::chrono::system_clock::now();
    if (config.engine == "evolattice") {
      Lattice initial = config.initial_lattice(*task);
      run_evolution(initial, *oracle, *task, config.evolution_config(), dir);
    } else {
      BaselineConfig bc;
      bc.mode = config.engine == "baseline_diff" ? "diff" : "regenerate";
      bc.steps = config.steps;
      bc.oracle_retry_budget = config.oracle_retry_budget;
      run_baseline(*oracle, *task, bc, dir);
    }
    auto finished = std::chrono::system_clock::now();

    // Wall-clock facts live outside the deterministic logs.
    nlohmann::ordered_json info;
    info["engine"] = config.engine;
    info["task"] = config.task_name;
    info["started_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(started.time_since_epoch()).count();
    info["duration_seconds"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(finished - started).count() / 1000.0;
    detail::write_file(dir / "run_info.json", info.dump(2) + "\n");
    return 0;
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return 2;
  } catch (const SnapshotError& e) {
    err << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return 1;
  }
}

inline int cmd_inspect(const std::string& snapshot_path, std::vector<std::string> inputs,
                       std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::string text;
  Lattice l;
  try {
    text = read_file(snapshot_path);
    l = load_snapshot(text, std::move(inputs));
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return 2;
  }

  ValidationReport report = validate(l);
  out << "nodes: " << l.nodes.size() << "\n";
  for (const auto& n : l.nodes) out << "  " << n.name << ": " << n.alternatives.size()
                                   << " alternative" << (n.alternatives.size() == 1 ? "" : "s")
                                   << "\n";
  out << "task inputs:";
  for (const auto& i : l.task_inputs) out << " " << i;
  out << "\n";
  auto en = enumerate_paths(l, 1, 0);
  out << "paths: " << en.total << "\n";
  out << "stats:\n";
  for (const auto& n : l.nodes) {
    for (const auto& a : n.alternatives) {
      out << "  " << n.name << "/" << a.name << ": ";
      if (a.stats.has_value()) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "mean=%.4f std=%.4f max=%.4f age=%d", a.stats->mean,
                      a.stats->stdev, a.stats->max, a.age);
        out << buf << "\n";
      } else {
        out << "unscored (age=" << a.age << ")\n";
      }
    }
  }
  if (report.empty()) {
    out << "validation: ok\n";
    return 0;
  }
  out << "validation: " << report.size() << " violation" << (report.size() == 1 ? "" : "s") << "\n";
  for (const auto& v : report)
    out << "  " << v.node << (v.alt_index >= 0 ? "[" + std::to_string(v.alt_index) + "]" : "")
        << " " << v.invariant << ": " << v.message << "\n";
  return 1;
}

inline int cmd_diff(const std::string& old_path, const std::string& new_path,
                    std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Lattice before, after;
  try {
    before = load_snapshot(read_file(old_path), {});
    after = load_snapshot(read_file(new_path), {});
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return 2;
  }
  StructuralDiff d = structural_diff(before, after);
  out << d.text;
  return d.empty() ? 0 : 1;  // diff-tool convention
}

inline int cmd_stats(const std::string& snapshot_path, std::vector<std::string> inputs,
                     std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Lattice l;
  try {
    l = load_snapshot(read_file(snapshot_path), std::move(inputs));
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return 2;
  }
  out << "node,alternative,mean,std,max,age\n";
  for (const auto& n : l.nodes) {
    for (const auto& a : n.alternatives) {
      out << n.name << "," << a.name << ",";
      if (a.stats.has_value()) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f,", a.stats->mean, a.stats->stdev,
                      a.stats->max);
        out << buf;
      } else {
        out << ",,,";
      }
      out << a.age << "\n";
    }
  }
  return 0;
}

// Re-executes a run from its persisted transcripts and checks that the
// regenerated metrics log is byte-identical.
inline int cmd_replay(const std::string& run_dir, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
  fs::path dir(run_dir);
  RunConfig config;
  try {
    config = RunConfig::load(dir / "config.json");
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return 2;
  }
  std::string recorded;
  try {
    recorded = read_file(dir / "metrics.jsonl");
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return 2;
  }

  fs::path tmp = dir / "replay_check";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  int code;
  try {
    auto task = config.make_task();
    TranscriptOracle oracle(dir);
    if (config.engine == "evolattice") {
      Lattice initial = config.initial_lattice(*task);
      run_evolution(initial, oracle, *task, config.evolution_config(), tmp,
                    /*write_transcripts=*/false);
    } else {
      BaselineConfig bc;
      bc.mode = config.engine == "baseline_diff" ? "diff" : "regenerate";
      bc.steps = config.steps;
      bc.oracle_retry_budget = config.oracle_retry_budget;
      run_baseline(oracle, *task, bc, tmp, /*write_transcripts=*/false);
    }
    std::string regenerated = read_file(tmp / "metrics.jsonl");
    if (regenerated == recorded) {
      out << "replay: ok (" << config.steps << " steps match)\n";
      code = 0;
    } else {
      auto a = detail::split_lines(recorded);
      auto b = detail::split_lines(regenerated);
      size_t diverged = 1;
      while (diverged <= std::min(a.size(), b.size()) && a[diverged - 1] == b[diverged - 1])
        ++diverged;
      out << "replay: metrics diverge at step " << diverged << "\n";
      code = 1;
    }
  } catch (const std::runtime_error& e) {
    err << e.what() << "\n";
    fs::remove_all(tmp, ec);
    return 2;  // missing transcript or unreadable run
  }
  fs::remove_all(tmp, ec);
  return code;
}

inline int cmd_tasks_export(const std::string& task_name, const std::string& config_path,
                            const std::string& out_path, std::ostream& out = std::cout,
                            std::ostream& err = std::cerr) {
  try {
    RunConfig config;
    if (!config_path.empty()) config = RunConfig::load(config_path);
    if (!task_name.empty()) config.task_name = task_name;
    auto task = config.make_task();
    if (out_path.empty()) {
      task->export_csv(out);
    } else {
      std::ofstream f(out_path, std::ios::binary);
      if (!f) throw std::runtime_error("cannot write " + out_path);
      task->export_csv(f);
    }
    return 0;
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return 1;
  }
}

}  // namespace evolattice::cli
