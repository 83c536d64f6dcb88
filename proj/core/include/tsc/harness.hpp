#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tsc/network.hpp"
#include "tsc/qlearn.hpp"

namespace tsc {

struct MdpSettings {
  int junction = 1;
  double d1 = 5.0;
  double d2 = 10.0;
  std::vector<double> action_durations{10.0, 20.0, 30.0};
  int truncation = 40;
  int samples_per_pair = 200;
  double frozen_duration = 20.0;
  int pair_cap = 10000;

  bool operator==(const MdpSettings&) const = default;
};

struct LearningSettings {
  double discount = 0.9;
  std::string schedule = "harmonic 1";
  std::string exploration = "epsilon-greedy";  // or "ucb"
  double epsilon0 = 1.0;
  double epsilon_decay = 1e-3;
  double epsilon_floor = 0.01;
  long cycles = 2000;
  std::uint64_t seed = 1;
  double q_init = 0.0;
  bool per_pair_steps = true;

  bool operator==(const LearningSettings&) const = default;
};

struct BaselineSettings {
  int seeds = 20;
  long eval_window = 100;

  bool operator==(const BaselineSettings&) const = default;
};

/// One verification check plus its numeric parameters (tolerances, sample
/// counts); parameters missing from the map take built-in defaults.
struct AuditSpec {
  std::string check;
  std::map<std::string, double> params;

  bool operator==(const AuditSpec&) const = default;
};

struct ExperimentConfig {
  /// The experiment network: a file path, a full inline network document
  /// (kept in canonical serialized form), or neither, which selects the
  /// built-in three-junction example.
  std::string network_file;
  std::string network_inline;
  std::string output_dir = "out";
  MdpSettings mdp;
  LearningSettings learning;
  BaselineSettings baselines;
  std::vector<AuditSpec> audits;  // empty runs the default suite

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses and fully validates a config document. A rejected config's
/// exception message lists every violated field, not only the first.
ExperimentConfig parse_config(const std::string& text);
/// Canonical form: parse(serialize(c)) == c and the serialization is
/// byte-stable, so it can be hashed.
std::string serialize_config(const ExperimentConfig& config);
ExperimentConfig load_config_file(const std::string& path);

/// FNV-1a 64 of the canonical serialization, as 16 hex digits. The output
/// directory is excluded: it changes where results land, not what they are.
std::string config_hash(const ExperimentConfig& config);

TrafficNetwork resolve_network(const ExperimentConfig& config);

/// Maps the learning section onto the episode runner's config.
EpisodeConfig episode_config(const ExperimentConfig& config);

struct RunManifest {
  std::string version;
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string rng_algorithm;
  std::string started;  // UTC, ISO 8601
  std::string finished;
  std::vector<std::string> outputs;  // file names inside the output directory
  std::map<std::string, double> stats;
};

std::string serialize_manifest(const RunManifest& manifest);

/// Command-line overrides applied on top of a loaded config.
struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool quiet = false;
};

struct CheckRow {
  std::string check;
  std::string subject;
  double value = 0.0;
  double tolerance = 0.0;
  long samples = 0;
  bool pass = false;
};

/// CSV with header check,subject,value,tolerance,samples,verdict.
std::string report_csv(const std::vector<CheckRow>& rows);
std::string report_text(const std::vector<CheckRow>& rows);

/// Trains one episode and writes trace.csv, cycles.csv, one q-table
/// snapshot per junction and manifest.json into the output directory.
RunManifest run_train(const ExperimentConfig& config, const RunOptions& options,
                      std::ostream& log);

struct VerifyOutcome {
  RunManifest manifest;
  std::vector<CheckRow> rows;
  long failures = 0;

  bool all_passed() const { return failures == 0; }
};

/// Runs the configured audit suite (or the default one), writing
/// report.txt, report.csv and manifest.json. The caller decides the exit
/// status from all_passed().
VerifyOutcome run_verify(const ExperimentConfig& config, const RunOptions& options,
                         std::ostream& log);

struct PolicyEvaluation {
  std::string policy;  // learned | fixed | random
  double mean_cost = 0.0;
  double std_error = 0.0;
  int seeds = 0;
};

/// Trains and scores the three reference policies over
/// config.baselines.seeds consecutive seeds starting at `seed`. Each run
/// is scored by the mean neighborhood cost over the last eval_window
/// cycles of a fresh 2*eval_window-cycle rollout.
std::vector<PolicyEvaluation> evaluate_baselines(const ExperimentConfig& config,
                                                 std::uint64_t seed, std::ostream* log);

/// Writes baselines.csv (policy,mean_cost,stderr,seeds) and manifest.json.
RunManifest run_baselines(const ExperimentConfig& config, const RunOptions& options,
                          std::ostream& log);

/// Estimates the configured junction's explicit decision process and
/// writes it next to its manifest.
RunManifest run_make_mdp(const ExperimentConfig& config, const RunOptions& options,
                         std::ostream& log);

/// Pretty-prints any artifact this suite emits (network, config, q-table,
/// explicit process, manifest, trace or report CSV), detecting the kind
/// from content. Returns false for an unrecognized file.
bool show_file(const std::string& path, std::ostream& out);

}  // namespace tsc
