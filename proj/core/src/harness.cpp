#include "tsc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "tsc/convergence.hpp"
#include "tsc/discretize.hpp"
#include "tsc/oracle.hpp"
#include "tsc/rng.hpp"
#include "tsc/sim.hpp"
#include "tsc/textio.hpp"
#include "tsc/version.hpp"

namespace tsc {

using nlohmann::json;

namespace {

/// Every accepted check name with its accepted parameter names.
const std::map<std::string, std::vector<std::string>>& audit_registry() {
  static const std::map<std::string, std::vector<std::string>> registry = {
      {"step-schedule", {}},
      {"contraction", {"trials", "scale"}},
      {"noise", {"samples"}},
      {"drift-field", {"samples"}},
      {"jacobian", {"delta_scale"}},
      {"oracle-gap", {"updates", "min_visits", "relative_tolerance", "exponent", "restart_every"}},
      {"boundedness", {}},
      {"trace-noise", {"min_group"}},
  };
  return registry;
}

struct ConfigReader {
  std::vector<std::string> issues;

  void complain(const std::string& what) { issues.push_back(what); }

  void check_keys(const json& obj, const std::vector<std::string>& allowed,
                  const std::string& context) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
        complain("unknown key '" + it.key() + "' in " + context);
  }

  void number(const json& obj, const char* key, const std::string& ctx, double& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_number()) {
      complain(ctx + "." + key + " must be a number");
      return;
    }
    out = obj[key].get<double>();
  }

  void integer(const json& obj, const char* key, const std::string& ctx, long& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_number_integer()) {
      complain(ctx + "." + key + " must be an integer");
      return;
    }
    out = obj[key].get<long>();
  }

  void integer(const json& obj, const char* key, const std::string& ctx, int& out) {
    long v = out;
    integer(obj, key, ctx, v);
    out = static_cast<int>(v);
  }

  void unsigned64(const json& obj, const char* key, const std::string& ctx,
                  std::uint64_t& out) {
    if (!obj.contains(key)) return;
    const json& v = obj[key];
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
      complain(ctx + "." + key + " must be a non-negative integer");
      return;
    }
    out = v.get<std::uint64_t>();
  }

  void boolean(const json& obj, const char* key, const std::string& ctx, bool& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_boolean()) {
      complain(ctx + "." + key + " must be a boolean");
      return;
    }
    out = obj[key].get<bool>();
  }

  void text(const json& obj, const char* key, const std::string& ctx, std::string& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_string()) {
      complain(ctx + "." + key + " must be a string");
      return;
    }
    out = obj[key].get<std::string>();
  }

  void numbers(const json& obj, const char* key, const std::string& ctx,
               std::vector<double>& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_array()) {
      complain(ctx + "." + key + " must be an array of numbers");
      return;
    }
    std::vector<double> values;
    for (const auto& v : obj[key]) {
      if (!v.is_number()) {
        complain(ctx + "." + key + " must contain only numbers");
        return;
      }
      values.push_back(v.get<double>());
    }
    out = std::move(values);
  }
};

void validate_ranges(const ExperimentConfig& c, ConfigReader& r) {
  if (!(c.learning.discount > 0.0) || !(c.learning.discount < 1.0))
    r.complain("learning.discount must lie in (0, 1)");
  try {
    StepSchedule::from_text(c.learning.schedule);
  } catch (const std::exception& e) {
    r.complain(std::string("learning.schedule: ") + e.what());
  }
  if (c.learning.exploration != "epsilon-greedy" && c.learning.exploration != "ucb")
    r.complain("learning.exploration must be 'epsilon-greedy' or 'ucb'");
  if (!(c.learning.epsilon0 >= 0.0) || c.learning.epsilon0 > 1.0)
    r.complain("learning.epsilon0 must lie in [0, 1]");
  if (!(c.learning.epsilon_decay >= 0.0)) r.complain("learning.epsilon_decay must be >= 0");
  if (!(c.learning.epsilon_floor >= 0.0) || c.learning.epsilon_floor > 1.0)
    r.complain("learning.epsilon_floor must lie in [0, 1]");
  if (c.learning.cycles < 0) r.complain("learning.cycles must be >= 0");
  if (!std::isfinite(c.learning.q_init)) r.complain("learning.q_init must be finite");

  if (!(c.mdp.d1 > 0.0)) r.complain("mdp.d1 must be positive");
  if (!(c.mdp.d2 > c.mdp.d1)) r.complain("mdp.d2 must exceed mdp.d1");
  if (c.mdp.action_durations.empty()) r.complain("mdp.action_durations must not be empty");
  for (double d : c.mdp.action_durations)
    if (!(d > 0.0)) r.complain("mdp.action_durations must all be positive");
  if (c.mdp.junction < 1) r.complain("mdp.junction must be a junction id (>= 1)");
  if (c.mdp.truncation < 1) r.complain("mdp.truncation must be >= 1");
  if (c.mdp.samples_per_pair < 1) r.complain("mdp.samples_per_pair must be >= 1");
  if (!(c.mdp.frozen_duration > 0.0)) r.complain("mdp.frozen_duration must be positive");
  if (c.mdp.pair_cap < 1) r.complain("mdp.pair_cap must be >= 1");

  if (c.baselines.seeds < 1) r.complain("baselines.seeds must be >= 1");
  if (c.baselines.eval_window < 1) r.complain("baselines.eval_window must be >= 1");

  if (c.output_dir.empty()) r.complain("output_dir must not be empty");

  for (const AuditSpec& a : c.audits) {
    const auto entry = audit_registry().find(a.check);
    if (entry == audit_registry().end()) {
      r.complain("audits: unknown check '" + a.check + "'");
      continue;
    }
    for (const auto& [key, value] : a.params) {
      if (std::find(entry->second.begin(), entry->second.end(), key) == entry->second.end())
        r.complain("audits." + a.check + ": unknown parameter '" + key + "'");
      else if (!(value > 0))
        r.complain("audits." + a.check + "." + key + " must be positive");
    }
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw std::invalid_argument("config must be a JSON object");

  ExperimentConfig config;
  ConfigReader r;
  r.check_keys(root, {"network", "output_dir", "mdp", "learning", "baselines", "audits"},
               "config");

  if (root.contains("network")) {
    const json& n = root["network"];
    if (n.is_string()) {
      config.network_file = n.get<std::string>();
      if (config.network_file.empty()) r.complain("network path must not be empty");
    } else if (n.is_object()) {
      try {
        const TrafficNetwork net = parse_network(n.dump());
        const ValidationReport report = validate_network(net);
        for (const auto& issue : report.issues)
          r.complain("network: " + issue.message);
        if (report.ok()) config.network_inline = serialize_network(net);
      } catch (const std::exception& e) {
        r.complain(std::string("network: ") + e.what());
      }
    } else {
      r.complain("network must be a file path or an inline network object");
    }
  }

  r.text(root, "output_dir", "config", config.output_dir);

  if (root.contains("mdp")) {
    const json& m = root["mdp"];
    if (!m.is_object()) {
      r.complain("mdp must be an object");
    } else {
      r.check_keys(m,
                   {"junction", "d1", "d2", "action_durations", "truncation", "samples_per_pair",
                    "frozen_duration", "pair_cap"},
                   "mdp");
      r.integer(m, "junction", "mdp", config.mdp.junction);
      r.number(m, "d1", "mdp", config.mdp.d1);
      r.number(m, "d2", "mdp", config.mdp.d2);
      r.numbers(m, "action_durations", "mdp", config.mdp.action_durations);
      r.integer(m, "truncation", "mdp", config.mdp.truncation);
      r.integer(m, "samples_per_pair", "mdp", config.mdp.samples_per_pair);
      r.number(m, "frozen_duration", "mdp", config.mdp.frozen_duration);
      r.integer(m, "pair_cap", "mdp", config.mdp.pair_cap);
    }
  }

  if (root.contains("learning")) {
    const json& l = root["learning"];
    if (!l.is_object()) {
      r.complain("learning must be an object");
    } else {
      r.check_keys(l,
                   {"discount", "schedule", "exploration", "epsilon0", "epsilon_decay",
                    "epsilon_floor", "cycles", "seed", "q_init", "per_pair_steps"},
                   "learning");
      r.number(l, "discount", "learning", config.learning.discount);
      r.text(l, "schedule", "learning", config.learning.schedule);
      r.text(l, "exploration", "learning", config.learning.exploration);
      r.number(l, "epsilon0", "learning", config.learning.epsilon0);
      r.number(l, "epsilon_decay", "learning", config.learning.epsilon_decay);
      r.number(l, "epsilon_floor", "learning", config.learning.epsilon_floor);
      r.integer(l, "cycles", "learning", config.learning.cycles);
      r.unsigned64(l, "seed", "learning", config.learning.seed);
      r.number(l, "q_init", "learning", config.learning.q_init);
      r.boolean(l, "per_pair_steps", "learning", config.learning.per_pair_steps);
    }
  }

  if (root.contains("baselines")) {
    const json& b = root["baselines"];
    if (!b.is_object()) {
      r.complain("baselines must be an object");
    } else {
      r.check_keys(b, {"seeds", "eval_window"}, "baselines");
      r.integer(b, "seeds", "baselines", config.baselines.seeds);
      r.integer(b, "eval_window", "baselines", config.baselines.eval_window);
    }
  }

  if (root.contains("audits")) {
    const json& audits = root["audits"];
    if (!audits.is_array()) {
      r.complain("audits must be an array");
    } else {
      for (const json& item : audits) {
        if (!item.is_object() || !item.contains("check") || !item["check"].is_string()) {
          r.complain("every audit entry needs a 'check' name");
          continue;
        }
        AuditSpec spec;
        spec.check = item["check"].get<std::string>();
        for (auto it = item.begin(); it != item.end(); ++it) {
          if (it.key() == "check") continue;
          if (!it.value().is_number()) {
            r.complain("audits." + spec.check + "." + it.key() + " must be a number");
            continue;
          }
          spec.params[it.key()] = it.value().get<double>();
        }
        config.audits.push_back(std::move(spec));
      }
    }
  }

  validate_ranges(config, r);

  if (!r.issues.empty()) {
    std::string message = "invalid config (" + std::to_string(r.issues.size()) + " problem" +
                          (r.issues.size() == 1 ? "" : "s") + "):";
    for (const auto& issue : r.issues) message += "\n  - " + issue;
    throw std::invalid_argument(message);
  }
  return config;
}

std::string serialize_config(const ExperimentConfig& config) {
  json root;
  if (!config.network_file.empty())
    root["network"] = config.network_file;
  else if (!config.network_inline.empty())
    root["network"] = json::parse(config.network_inline);

  root["output_dir"] = config.output_dir;
  root["mdp"] = {{"junction", config.mdp.junction},
                 {"d1", config.mdp.d1},
                 {"d2", config.mdp.d2},
                 {"action_durations", config.mdp.action_durations},
                 {"truncation", config.mdp.truncation},
                 {"samples_per_pair", config.mdp.samples_per_pair},
                 {"frozen_duration", config.mdp.frozen_duration},
                 {"pair_cap", config.mdp.pair_cap}};
  root["learning"] = {{"discount", config.learning.discount},
                      {"schedule", config.learning.schedule},
                      {"exploration", config.learning.exploration},
                      {"epsilon0", config.learning.epsilon0},
                      {"epsilon_decay", config.learning.epsilon_decay},
                      {"epsilon_floor", config.learning.epsilon_floor},
                      {"cycles", config.learning.cycles},
                      {"seed", config.learning.seed},
                      {"q_init", config.learning.q_init},
                      {"per_pair_steps", config.learning.per_pair_steps}};
  root["baselines"] = {{"seeds", config.baselines.seeds},
                       {"eval_window", config.baselines.eval_window}};
  json audits = json::array();
  for (const AuditSpec& a : config.audits) {
    json item{{"check", a.check}};
    for (const auto& [key, value] : a.params) item[key] = value;
    audits.push_back(item);
  }
  root["audits"] = audits;
  return root.dump(2) + "\n";
}

ExperimentConfig load_config_file(const std::string& path) {
  return parse_config(read_text_file(path));
}

std::string config_hash(const ExperimentConfig& config) {
  ExperimentConfig keyed = config;
  keyed.output_dir.clear();  // where results land does not change what they are
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize_config(keyed))));
  return buf;
}

TrafficNetwork resolve_network(const ExperimentConfig& config) {
  if (!config.network_file.empty()) return read_network_file(config.network_file);
  if (!config.network_inline.empty()) return parse_network(config.network_inline);
  return build_three_junction_example();
}

EpisodeConfig episode_config(const ExperimentConfig& config) {
  EpisodeConfig ep;
  ep.d1 = config.mdp.d1;
  ep.d2 = config.mdp.d2;
  ep.action_durations = config.mdp.action_durations;
  ep.discount = DiscountFactor(config.learning.discount);
  ep.schedule = StepSchedule::from_text(config.learning.schedule);
  ep.per_pair_steps = config.learning.per_pair_steps;
  ep.exploration.kind = config.learning.exploration == "ucb" ? ExplorationKind::Ucb
                                                             : ExplorationKind::EpsilonGreedy;
  ep.exploration.epsilon = {config.learning.epsilon0, config.learning.epsilon_decay,
                            config.learning.epsilon_floor};
  ep.cycles = config.learning.cycles;
  ep.q_init = config.learning.q_init;
  return ep;
}

namespace {

std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ExperimentConfig apply_options(ExperimentConfig config, const RunOptions& options) {
  if (options.seed) config.learning.seed = *options.seed;
  if (options.out_dir) config.output_dir = *options.out_dir;
  return config;
}

RunManifest start_manifest(const std::string& command, const ExperimentConfig& config) {
  RunManifest m;
  m.version = kVersion;
  m.command = command;
  m.config_hash = config_hash(config);
  m.seed = config.learning.seed;
  m.rng_algorithm = std::string(RngStream::algorithm);
  m.started = utc_timestamp();
  return m;
}

std::filesystem::path prepare_output_dir(const ExperimentConfig& config) {
  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void finish_manifest(RunManifest& m, const std::filesystem::path& dir) {
  m.outputs.push_back("manifest.json");
  std::sort(m.outputs.begin(), m.outputs.end());
  m.finished = utc_timestamp();
  write_text_file((dir / "manifest.json").string(), serialize_manifest(m));
}

}  // namespace

std::string serialize_manifest(const RunManifest& manifest) {
  json root;
  root["version"] = manifest.version;
  root["command"] = manifest.command;
  root["config_hash"] = manifest.config_hash;
  root["seed"] = manifest.seed;
  root["rng_algorithm"] = manifest.rng_algorithm;
  root["started"] = manifest.started;
  root["finished"] = manifest.finished;
  root["outputs"] = manifest.outputs;
  root["stats"] = manifest.stats;
  return root.dump(2) + "\n";
}

std::string report_csv(const std::vector<CheckRow>& rows) {
  std::ostringstream out;
  out << "check,subject,value,tolerance,samples,verdict\n";
  for (const CheckRow& row : rows)
    out << row.check << ',' << row.subject << ',' << format_double(row.value) << ','
        << format_double(row.tolerance) << ',' << row.samples << ','
        << (row.pass ? "pass" : "fail") << '\n';
  return out.str();
}

std::string report_text(const std::vector<CheckRow>& rows) {
  std::ostringstream out;
  long failures = 0;
  for (const CheckRow& row : rows) {
    out << (row.pass ? "[pass] " : "[FAIL] ") << row.check << " (" << row.subject
        << "): value=" << format_double(row.value)
        << " tolerance=" << format_double(row.tolerance) << " samples=" << row.samples << '\n';
    if (!row.pass) ++failures;
  }
  out << rows.size() << " checks, " << failures << " failure" << (failures == 1 ? "" : "s")
      << '\n';
  return out.str();
}

RunManifest run_train(const ExperimentConfig& base, const RunOptions& options,
                      std::ostream& log) {
  const ExperimentConfig config = apply_options(base, options);
  const TrafficNetwork net = resolve_network(config);
  const std::filesystem::path dir = prepare_output_dir(config);
  RunManifest manifest = start_manifest("train", config);

  EpisodeConfig ep = episode_config(config);
  std::ostringstream cycles_csv;
  cycles_csv << cycle_csv_header() << '\n';
  ep.on_cycle = [&](const CycleReport& report) { append_cycle_csv(cycles_csv, report); };

  const int n_actions = static_cast<int>(ep.action_durations.size());
  EpisodeResult result = run_marl_episode(net, build_tables(net, n_actions, ep.q_init), ep,
                                          RngStream(config.learning.seed));

  write_text_file((dir / "trace.csv").string(), serialize_trace(result.trace));
  write_text_file((dir / "cycles.csv").string(), cycles_csv.str());
  manifest.outputs = {"trace.csv", "cycles.csv"};
  for (const QTable& table : result.tables) {
    const JunctionSpec* j = net.find_junction(table.junction);
    const std::string name = "qtable_j" + std::to_string(table.junction) + ".txt";
    write_qtable_file((dir / name).string(), table, static_cast<int>(j->incoming_lanes.size()),
                      static_cast<int>(j->phases.size()), ep.action_durations, ep.discount,
                      ep.schedule);
    manifest.outputs.push_back(name);
  }

  manifest.stats = {{"cycles", static_cast<double>(config.learning.cycles)},
                    {"agents", static_cast<double>(result.tables.size())},
                    {"mean_cost", result.mean_cost},
                    {"total_blocked", static_cast<double>(result.total_blocked)},
                    {"sup_q_norm", result.sup_q_norm}};
  finish_manifest(manifest, dir);

  if (!options.quiet)
    log << "trained " << result.tables.size() << " agents for " << config.learning.cycles
        << " cycles: mean cost " << format_double(result.mean_cost) << ", sup |Q| "
        << format_double(result.sup_q_norm) << ", outputs in " << dir.string() << '\n';
  return manifest;
}

namespace {

double param(const AuditSpec& spec, const std::string& key, double fallback) {
  const auto it = spec.params.find(key);
  return it == spec.params.end() ? fallback : it->second;
}

std::vector<AuditSpec> default_audits() {
  return {{"step-schedule", {}}, {"contraction", {}}, {"noise", {}},   {"drift-field", {}},
          {"jacobian", {}},      {"oracle-gap", {}},  {"boundedness", {}}};
}

/// Lazily built artifacts shared between checks of one verify run.
struct VerifyContext {
  const ExperimentConfig& config;
  const TrafficNetwork& net;
  RngStream root;

  std::optional<EpisodeResult> training;
  std::optional<ExplicitMDP> mdp;
  std::optional<QVector> q_star;

  const EpisodeResult& trained() {
    if (!training) {
      EpisodeConfig ep = episode_config(config);
      const int n_actions = static_cast<int>(ep.action_durations.size());
      training = run_marl_episode(net, build_tables(net, n_actions, ep.q_init), ep,
                                  root.substream("train"));
    }
    return *training;
  }

  const ExplicitMDP& process() {
    if (!mdp) {
      MdpBuildOptions options;
      options.d1 = config.mdp.d1;
      options.d2 = config.mdp.d2;
      options.action_durations = config.mdp.action_durations;
      options.truncation = config.mdp.truncation;
      options.samples_per_pair = config.mdp.samples_per_pair;
      options.pair_cap = config.mdp.pair_cap;
      options.frozen_duration = config.mdp.frozen_duration;
      mdp = mdp_from_network(net, config.mdp.junction, DiscountFactor(config.learning.discount),
                             options, root.substream("mdp"))
                .mdp;
    }
    return *mdp;
  }

  const QVector& fixed_point() {
    if (!q_star) q_star = solve_q_star(process(), 1e-10);
    return *q_star;
  }

  std::string subject() const { return "junction-" + std::to_string(config.mdp.junction); }
};

void run_one_audit(const AuditSpec& spec, VerifyContext& ctx, std::vector<CheckRow>& rows) {
  const ExperimentConfig& config = ctx.config;

  if (spec.check == "step-schedule") {
    const StepSchedule schedule = StepSchedule::from_text(config.learning.schedule);
    const ScheduleAudit audit = check_step_schedule(schedule);
    rows.push_back({"step-schedule", schedule.to_text(), audit.ok() ? 1.0 : 0.0, 1.0, 0,
                    audit.ok()});

  } else if (spec.check == "contraction") {
    const ExplicitMDP& mdp = ctx.process();
    const int trials = static_cast<int>(param(spec, "trials", 200));
    const double default_scale =
        max_neighborhood_cost(ctx.net) / (1.0 - config.learning.discount);
    const double scale = param(spec, "scale", default_scale);
    RngStream rng = ctx.root.substream("contraction");
    const ContractionEstimate est = estimate_contraction(
        [&](const QVector& q) { return q_operator(mdp, q); }, mdp.n_pairs(), trials, scale, rng);
    const double tol = mdp.discount + 1e-9;
    rows.push_back({"contraction", ctx.subject(), est.modulus, tol, est.trials,
                    est.modulus <= tol});

  } else if (spec.check == "noise") {
    const ExplicitMDP& mdp = ctx.process();
    const int samples = static_cast<int>(param(spec, "samples", 200));
    RngStream rng = ctx.root.substream("noise");
    const NoiseAudit audit = noise_statistics(mdp, ctx.fixed_point(), samples, rng);
    rows.push_back({"noise-mean", ctx.subject(), audit.zero_mean_fraction, 0.95, audit.samples,
                    audit.zero_mean_ok});
    rows.push_back({"noise-moment", ctx.subject(), audit.bounded_fraction, 1.0, audit.samples,
                    audit.second_moment_ok});

  } else if (spec.check == "drift-field") {
    const ExplicitMDP& mdp = ctx.process();
    const int samples = static_cast<int>(param(spec, "samples", 200));
    RngStream rng = ctx.root.substream("drift");
    QVector q = ctx.fixed_point();
    for (double& v : q) v *= 0.5;  // between start and fixed point: drift nonzero
    const DriftFieldAudit audit = drift_field_estimate(mdp, q, samples, rng);
    rows.push_back({"drift-field", ctx.subject(), audit.within_fraction, 0.95,
                    static_cast<long>(mdp.n_pairs()) * samples, audit.consistent});

  } else if (spec.check == "jacobian") {
    const ExplicitMDP& mdp = ctx.process();
    const JacobianSignAudit audit =
        cooperative_jacobian_signs(mdp, ctx.fixed_point(), param(spec, "delta_scale", 1e-3));
    rows.push_back({"jacobian", ctx.subject(), audit.max_diagonal, 0.0,
                    audit.dim - audit.boundary_columns, audit.cooperative});

  } else if (spec.check == "oracle-gap") {
    const ExplicitMDP& mdp = ctx.process();
    MdpLearnConfig learn;
    learn.updates = static_cast<long>(param(spec, "updates", 500000));
    learn.restart_every = static_cast<long>(param(spec, "restart_every", 1));
    const double exponent = param(spec, "exponent", 0.6);
    learn.schedule =
        exponent == 1.0 ? StepSchedule::harmonic() : StepSchedule::polynomial(exponent);
    // A frozen epsilon of one explores uniformly, so every pair keeps
    // collecting visits and qualifies for the comparison.
    learn.exploration = {ExplorationKind::EpsilonGreedy, {1.0, 0.0, 1.0}};
    const MdpLearnResult learned = q_learning_on_mdp(mdp, learn, ctx.root.substream("learn"));
    const OracleGapAudit audit =
        oracle_gap(learned.table.values, learned.visits.pair, mdp, ctx.fixed_point(),
                   static_cast<long>(param(spec, "min_visits", 100)));
    const double tol =
        param(spec, "relative_tolerance", 0.05) * std::max(1.0, max_abs_q(ctx.fixed_point()));
    rows.push_back({"oracle-gap", ctx.subject(), audit.max_gap, tol, audit.qualified_pairs,
                    audit.qualified_pairs > 0 && audit.max_gap < tol});
    rows.push_back({"policy-regret", ctx.subject(), audit.max_policy_regret, 2.0 * tol,
                    audit.compared_states,
                    audit.compared_states > 0 && audit.max_policy_regret <= 2.0 * tol});

  } else if (spec.check == "boundedness") {
    const EpisodeResult& trained = ctx.trained();
    const BoundednessAudit audit =
        boundedness_audit(trained.trace, std::abs(config.learning.q_init),
                          max_neighborhood_cost(ctx.net), config.learning.discount);
    rows.push_back({"boundedness", "training-trace", audit.sup_norm, audit.envelope, audit.rows,
                    audit.within_envelope});

  } else if (spec.check == "trace-noise") {
    const EpisodeResult& trained = ctx.trained();
    const NoiseAudit audit =
        noise_statistics(trained.trace, max_neighborhood_cost(ctx.net),
                         config.learning.discount, static_cast<long>(param(spec, "min_group", 100)));
    rows.push_back({"trace-noise-mean", "training-trace", audit.zero_mean_fraction, 0.95,
                    audit.samples, audit.zero_mean_ok});
    rows.push_back({"trace-noise-moment", "training-trace", audit.bounded_fraction, 1.0,
                    audit.samples, audit.second_moment_ok});

  } else {
    throw std::invalid_argument("unknown check '" + spec.check + "'");
  }
}

}  // namespace

VerifyOutcome run_verify(const ExperimentConfig& base, const RunOptions& options,
                         std::ostream& log) {
  const ExperimentConfig config = apply_options(base, options);
  const TrafficNetwork net = resolve_network(config);
  const std::filesystem::path dir = prepare_output_dir(config);

  VerifyOutcome outcome;
  outcome.manifest = start_manifest("verify", config);

  VerifyContext ctx{config, net, RngStream(config.learning.seed), {}, {}, {}};
  const std::vector<AuditSpec> audits =
      config.audits.empty() ? default_audits() : config.audits;
  for (const AuditSpec& spec : audits) run_one_audit(spec, ctx, outcome.rows);
  for (const CheckRow& row : outcome.rows)
    if (!row.pass) ++outcome.failures;

  write_text_file((dir / "report.csv").string(), report_csv(outcome.rows));
  write_text_file((dir / "report.txt").string(), report_text(outcome.rows));
  outcome.manifest.outputs = {"report.csv", "report.txt"};
  outcome.manifest.stats = {{"checks", static_cast<double>(outcome.rows.size())},
                            {"failures", static_cast<double>(outcome.failures)}};
  finish_manifest(outcome.manifest, dir);

  if (!options.quiet) log << report_text(outcome.rows);
  return outcome;
}

namespace {

/// Runs the control loop with a frozen decision rule and returns the mean
/// neighborhood cost over the final `window` cycles.
double evaluate_policy(const TrafficNetwork& net, const EpisodeConfig& ep, long cycles,
                       long window, const std::function<int(int, int, RngStream&)>& pick,
                       const RngStream& root) {
  Simulation sim(net, root.substream("simulation"));
  RngStream choices = root.substream("exploration");

  const int n_actions = static_cast<int>(ep.action_durations.size());
  const double default_duration = ep.action_durations[(n_actions - 1) / 2];
  GreenSchedule schedule = GreenSchedule::uniform(net, default_duration);

  std::map<int, int> active_phase;
  for (const auto& j : net.junctions) active_phase[j.id] = 1;

  double cost_sum = 0.0;
  long cost_count = 0;
  for (long t = 0; t < cycles; ++t) {
    auto counts = sim.counts_by_lane();
    int agent = 0;
    for (const auto& j : net.junctions) {
      StateSpace space(static_cast<int>(j.incoming_lanes.size()),
                       static_cast<int>(j.phases.size()));
      const int s =
          space.index(observe_state(net, counts, j.id, active_phase[j.id], ep.d1, ep.d2));
      schedule.set(j.id, active_phase[j.id], ep.action_durations[pick(agent, s, choices)]);
      ++agent;
    }

    sim.advance_cycle(schedule);

    counts = sim.counts_by_lane();
    for (const auto& j : net.junctions) {
      if (t >= cycles - window) {
        cost_sum += neighborhood_cost(net, counts, j.id, ep.d1, ep.d2, t).value;
        ++cost_count;
      }
      active_phase[j.id] = active_phase[j.id] % static_cast<int>(j.phases.size()) + 1;
    }
  }
  return cost_count > 0 ? cost_sum / static_cast<double>(cost_count) : 0.0;
}

}  // namespace

std::vector<PolicyEvaluation> evaluate_baselines(const ExperimentConfig& config,
                                                 std::uint64_t seed, std::ostream* log) {
  const TrafficNetwork net = resolve_network(config);
  const EpisodeConfig ep = episode_config(config);
  const int n_actions = static_cast<int>(ep.action_durations.size());
  const int middle = (n_actions - 1) / 2;
  const long window = config.baselines.eval_window;
  const int n_seeds = config.baselines.seeds;

  std::vector<std::vector<double>> scores(3);
  for (int r = 0; r < n_seeds; ++r) {
    const RngStream root(seed + static_cast<std::uint64_t>(r));

    const EpisodeResult trained = run_marl_episode(net, build_tables(net, n_actions, ep.q_init),
                                                   ep, root.substream("train"));
    const auto learned = [&](int agent, int state, RngStream&) {
      return trained.tables[agent].argmin_action(state);
    };
    const auto fixed = [&](int, int, RngStream&) { return middle; };
    const auto random = [&](int, int, RngStream& rng) {
      return rng.uniform_int(0, n_actions - 1);
    };

    scores[0].push_back(
        evaluate_policy(net, ep, 2 * window, window, learned, root.substream("eval-learned")));
    scores[1].push_back(
        evaluate_policy(net, ep, 2 * window, window, fixed, root.substream("eval-fixed")));
    scores[2].push_back(
        evaluate_policy(net, ep, 2 * window, window, random, root.substream("eval-random")));
    if (log)
      *log << "seed " << seed + static_cast<std::uint64_t>(r) << ": learned "
           << format_double(scores[0].back()) << ", fixed " << format_double(scores[1].back())
           << ", random " << format_double(scores[2].back()) << '\n';
  }

  const char* names[3] = {"learned", "fixed", "random"};
  std::vector<PolicyEvaluation> evaluations;
  for (int p = 0; p < 3; ++p) {
    PolicyEvaluation eval;
    eval.policy = names[p];
    eval.seeds = n_seeds;
    double sum = 0.0;
    for (double s : scores[p]) sum += s;
    eval.mean_cost = sum / static_cast<double>(n_seeds);
    if (n_seeds > 1) {
      double ss = 0.0;
      for (double s : scores[p]) ss += (s - eval.mean_cost) * (s - eval.mean_cost);
      eval.std_error = std::sqrt(ss / static_cast<double>(n_seeds - 1) /
                                 static_cast<double>(n_seeds));
    }
    evaluations.push_back(eval);
  }
  return evaluations;
}

RunManifest run_baselines(const ExperimentConfig& base, const RunOptions& options,
                          std::ostream& log) {
  const ExperimentConfig config = apply_options(base, options);
  const std::filesystem::path dir = prepare_output_dir(config);
  RunManifest manifest = start_manifest("baselines", config);

  const std::vector<PolicyEvaluation> evaluations =
      evaluate_baselines(config, config.learning.seed, options.quiet ? nullptr : &log);

  std::ostringstream csv;
  csv << "policy,mean_cost,stderr,seeds\n";
  for (const PolicyEvaluation& eval : evaluations) {
    csv << eval.policy << ',' << format_double(eval.mean_cost) << ','
        << format_double(eval.std_error) << ',' << eval.seeds << '\n';
    manifest.stats[eval.policy + "_mean"] = eval.mean_cost;
    manifest.stats[eval.policy + "_stderr"] = eval.std_error;
  }
  manifest.stats["seeds"] = static_cast<double>(config.baselines.seeds);
  write_text_file((dir / "baselines.csv").string(), csv.str());
  manifest.outputs = {"baselines.csv"};
  finish_manifest(manifest, dir);

  if (!options.quiet) log << csv.str();
  return manifest;
}

RunManifest run_make_mdp(const ExperimentConfig& base, const RunOptions& options,
                         std::ostream& log) {
  const ExperimentConfig config = apply_options(base, options);
  const TrafficNetwork net = resolve_network(config);
  const std::filesystem::path dir = prepare_output_dir(config);
  RunManifest manifest = start_manifest("make-mdp", config);

  MdpBuildOptions build;
  build.d1 = config.mdp.d1;
  build.d2 = config.mdp.d2;
  build.action_durations = config.mdp.action_durations;
  build.truncation = config.mdp.truncation;
  build.samples_per_pair = config.mdp.samples_per_pair;
  build.pair_cap = config.mdp.pair_cap;
  build.frozen_duration = config.mdp.frozen_duration;
  const MdpBuildResult result =
      mdp_from_network(net, config.mdp.junction, DiscountFactor(config.learning.discount), build,
                       RngStream(config.learning.seed));

  const std::string name = "mdp_j" + std::to_string(config.mdp.junction) + ".txt";
  write_mdp_file((dir / name).string(), result.mdp);
  manifest.outputs = {name};
  manifest.stats = {{"states", static_cast<double>(result.mdp.n_states)},
                    {"pairs", static_cast<double>(result.mdp.n_pairs())},
                    {"rollouts", static_cast<double>(result.rollouts)},
                    {"max_row_stderr", result.max_row_stderr}};
  finish_manifest(manifest, dir);

  if (!options.quiet)
    log << "estimated " << result.mdp.n_states << " states x " << result.mdp.n_actions[0]
        << " actions from " << result.rollouts << " rollouts (worst row stderr "
        << format_double(result.max_row_stderr) << ") -> " << (dir / name).string() << '\n';
  return manifest;
}

namespace {

void show_qtable(const std::string& text, std::ostream& out) {
  const QTableSnapshot snap = parse_qtable(text);
  out << "q-table for junction " << snap.table.junction << ": " << snap.table.n_states
      << " states x " << snap.table.n_actions << " actions (" << snap.lanes << " lanes, "
      << snap.phases << " phases)\n";
  out << "discount " << format_double(snap.discount) << ", schedule " << snap.schedule.to_text()
      << ", durations";
  for (double d : snap.action_durations) out << ' ' << format_double(d);
  out << '\n';
  double lo = 0.0, hi = 0.0;
  std::vector<long> greedy_counts(snap.table.n_actions, 0);
  for (int s = 0; s < snap.table.n_states; ++s) {
    ++greedy_counts[snap.table.argmin_action(s)];
    for (int a = 0; a < snap.table.n_actions; ++a) {
      const double v = snap.table.at(s, a);
      if (s == 0 && a == 0) {
        lo = hi = v;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  out << "values in [" << format_double(lo) << ", " << format_double(hi) << "]\n";
  out << "greedy action histogram:";
  for (int a = 0; a < snap.table.n_actions; ++a) out << ' ' << greedy_counts[a];
  out << '\n';
}

void show_mdp(const std::string& text, std::ostream& out) {
  const ExplicitMDP mdp = parse_mdp(text);
  out << "explicit process: " << mdp.n_states << " states, " << mdp.n_pairs()
      << " state-action pairs, discount " << format_double(mdp.discount) << '\n';
  double lo = mdp.cost_mean[0], hi = mdp.cost_mean[0];
  long nonzero = 0;
  for (int k = 0; k < mdp.n_pairs(); ++k) {
    lo = std::min(lo, mdp.cost_mean[k]);
    hi = std::max(hi, mdp.cost_mean[k]);
    for (double p : mdp.p[k])
      if (p != 0.0) ++nonzero;
  }
  out << "mean costs in [" << format_double(lo) << ", " << format_double(hi) << "], "
      << nonzero << " nonzero transition entries\n";
}

void show_network(const TrafficNetwork& net, std::ostream& out) {
  out << "network: " << net.junctions.size() << " junctions, " << net.lanes.size()
      << " lanes\n";
  for (const auto& j : net.junctions) {
    out << "junction " << j.id << ": lanes";
    for (int l : j.incoming_lanes) out << ' ' << l;
    out << ", " << j.phases.size() << " phases, neighborhood";
    const auto it = net.neighborhoods.find(j.id);
    if (it != net.neighborhoods.end())
      for (int n : it->second) out << ' ' << n;
    out << '\n';
  }
  const ValidationReport report = validate_network(net);
  if (report.ok()) {
    out << "structurally valid\n";
  } else {
    out << report.issues.size() << " validation issues:\n";
    for (const auto& issue : report.issues) out << "  - " << issue.message << '\n';
  }
}

bool show_csv(const std::string& text, std::ostream& out) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) return false;
  long rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  if (header == trace_csv_header()) {
    out << "training trace: " << rows << " update rows\n";
  } else if (header == cycle_csv_header()) {
    out << "cycle log: " << rows << " lane-cycle rows\n";
  } else if (header == "check,subject,value,tolerance,samples,verdict" ||
             header == "policy,mean_cost,stderr,seeds") {
    out << text;
  } else {
    return false;
  }
  return true;
}

}  // namespace

bool show_file(const std::string& path, std::ostream& out) {
  const std::string text = read_text_file(path);

  if (text.rfind("tsc-qtable v1", 0) == 0) {
    show_qtable(text, out);
    return true;
  }
  if (text.rfind("tsc-mdp v1", 0) == 0) {
    show_mdp(text, out);
    return true;
  }

  if (!text.empty() && (text[0] == '{' || text[0] == '[')) {
    json root = json::parse(text, nullptr, false);
    if (!root.is_discarded() && root.is_object()) {
      if (root.contains("junctions")) {
        show_network(parse_network(text), out);
        return true;
      }
      if (root.contains("command") && root.contains("version")) {
        out << "manifest: " << root["command"].get<std::string>() << " run, version "
            << root["version"].get<std::string>() << ", seed " << root["seed"] << '\n';
        out << "config hash " << root["config_hash"].get<std::string>() << ", started "
            << root["started"].get<std::string>() << '\n';
        out << "outputs:";
        for (const auto& o : root["outputs"]) out << ' ' << o.get<std::string>();
        out << '\n';
        return true;
      }
      const ExperimentConfig config = parse_config(text);
      out << "experiment config, hash " << config_hash(config) << '\n';
      out << serialize_config(config);
      return true;
    }
  }

  return show_csv(text, out);
}

}  // namespace tsc
