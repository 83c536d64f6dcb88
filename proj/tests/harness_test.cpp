#include <algorithm>
#include <cctype>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "tsc/harness.hpp"
#include "tsc/oracle.hpp"
#include "tsc/textio.hpp"
#include "tsc/version.hpp"

using namespace tsc;
namespace fs = std::filesystem;

namespace {

/// Fresh directory for one test, removed on scope exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("tmp_tests") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& leaf = "") const {
    return leaf.empty() ? path.string() : (path / leaf).string();
  }
};

ExperimentConfig small_junction_config() {
  ExperimentConfig config;
  config.network_inline = serialize_network(build_single_junction(2, 0.2, 0.5, 40));
  config.learning.cycles = 80;
  config.mdp.samples_per_pair = 30;
  return config;
}

bool looks_like_utc(const std::string& stamp) {
  return stamp.size() == 20 && stamp[10] == 'T' && stamp[19] == 'Z';
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("an empty document yields the default configuration") {
  const ExperimentConfig config = parse_config("{}");
  CHECK(config == ExperimentConfig{});
  CHECK(config.output_dir == "out");
  CHECK(config.learning.cycles == 2000);
  CHECK(config.mdp.samples_per_pair == 200);
  CHECK(config.audits.empty());
}

TEST_CASE("configs round-trip through their canonical form") {
  nlohmann::json doc;
  doc["network"] = nlohmann::json::parse(serialize_network(build_single_junction(3, 0.1, 0.5, 30)));
  doc["output_dir"] = "elsewhere";
  doc["mdp"] = {{"junction", 1}, {"d1", 2.0},      {"d2", 4.0},
                {"truncation", 20}, {"samples_per_pair", 50}, {"pair_cap", 500}};
  doc["learning"] = {{"discount", 0.8}, {"schedule", "polynomial 0.7"},
                     {"exploration", "ucb"}, {"cycles", 120}, {"seed", 9}};
  doc["baselines"] = {{"seeds", 5}, {"eval_window", 25}};
  doc["audits"] = {{{"check", "contraction"}, {"trials", 50.0}},
                   {{"check", "step-schedule"}}};

  const ExperimentConfig config = parse_config(doc.dump());
  CHECK(config.network_inline == serialize_network(build_single_junction(3, 0.1, 0.5, 30)));
  CHECK(config.mdp.d1 == 2.0);
  CHECK(config.mdp.samples_per_pair == 50);
  CHECK(config.mdp.action_durations == std::vector<double>{10.0, 20.0, 30.0});
  CHECK(config.learning.schedule == "polynomial 0.7");
  CHECK(config.learning.exploration == "ucb");
  CHECK(config.learning.seed == 9);
  CHECK(config.baselines.seeds == 5);
  REQUIRE(config.audits.size() == 2);
  CHECK(config.audits[0].check == "contraction");
  CHECK(config.audits[0].params.at("trials") == 50.0);
  CHECK(config.audits[1].params.empty());

  const std::string canonical = serialize_config(config);
  CHECK(parse_config(canonical) == config);
  CHECK(serialize_config(parse_config(canonical)) == canonical);
}

TEST_CASE("every violation is reported at once") {
  const std::string text = R"({
    "bogus": 1,
    "output_dir": 5,
    "mdp": {"d1": 10.0, "d2": 5.0},
    "learning": {"discount": 2.0, "cycles": -1}
  })";
  try {
    parse_config(text);
    FAIL("expected the config to be rejected");
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    for (const char* needle : {"bogus", "output_dir", "d2", "discount", "cycles"})
      CHECK_MESSAGE(what.find(needle) != std::string::npos, "missing complaint about ", needle);
  }

  CHECK_THROWS_AS(parse_config("not json at all"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("[1, 2]"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(R"({"network": 5})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(R"({"network": ""})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(R"({"audits": [{"check": "no-such-check"}]})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_config(R"({"audits": [{"check": "contraction", "banana": 1}]})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_config(R"({"learning": {"schedule": "sometimes"}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_config(R"({"learning": {"exploration": "bold"}})"),
                  std::invalid_argument);
}

TEST_CASE("network resolution prefers file, then inline, then the example") {
  TempDir dir("resolve");
  const TrafficNetwork solo = build_single_junction(2, 0.3, 0.5, 20);

  ExperimentConfig from_file;
  from_file.network_file = dir.str("net.json");
  write_network_file(from_file.network_file, solo);
  CHECK(serialize_network(resolve_network(from_file)) == serialize_network(solo));

  ExperimentConfig inline_net;
  inline_net.network_inline = serialize_network(solo);
  CHECK(serialize_network(resolve_network(inline_net)) == serialize_network(solo));

  CHECK(serialize_network(resolve_network(ExperimentConfig{})) ==
        serialize_network(build_three_junction_example()));

  ExperimentConfig missing;
  missing.network_file = dir.str("absent.json");
  CHECK_THROWS_AS(resolve_network(missing), std::runtime_error);
}

TEST_CASE("the hash tracks content but not the output location") {
  const ExperimentConfig base;
  const std::string h = config_hash(base);
  CHECK(h.size() == 16);
  for (char c : h) CHECK(std::isxdigit(static_cast<unsigned char>(c)));

  ExperimentConfig moved = base;
  moved.output_dir = "somewhere/else";
  CHECK(config_hash(moved) == h);

  ExperimentConfig changed = base;
  changed.learning.cycles = 2001;
  CHECK(config_hash(changed) != h);
}

TEST_CASE("learning settings map onto the episode runner") {
  ExperimentConfig config;
  config.mdp.d1 = 3.0;
  config.mdp.d2 = 7.0;
  config.mdp.action_durations = {5.0, 15.0};
  config.learning.discount = 0.8;
  config.learning.schedule = "polynomial 0.7";
  config.learning.exploration = "ucb";
  config.learning.cycles = 123;
  config.learning.q_init = 1.5;
  config.learning.per_pair_steps = false;

  const EpisodeConfig ep = episode_config(config);
  CHECK(ep.d1 == 3.0);
  CHECK(ep.d2 == 7.0);
  CHECK(ep.action_durations == std::vector<double>{5.0, 15.0});
  CHECK(ep.discount.value == 0.8);
  CHECK(ep.schedule.to_text() == "polynomial 0.7");
  CHECK(ep.exploration.kind == ExplorationKind::Ucb);
  CHECK(ep.cycles == 123);
  CHECK(ep.q_init == 1.5);
  CHECK_FALSE(ep.per_pair_steps);

  ExperimentConfig greedy = config;
  greedy.learning.exploration = "epsilon-greedy";
  greedy.learning.epsilon0 = 0.7;
  greedy.learning.epsilon_decay = 0.01;
  greedy.learning.epsilon_floor = 0.05;
  const EpisodeConfig ep2 = episode_config(greedy);
  CHECK(ep2.exploration.kind == ExplorationKind::EpsilonGreedy);
  CHECK(ep2.exploration.epsilon.epsilon0 == 0.7);
  CHECK(ep2.exploration.epsilon.decay_rate == 0.01);
  CHECK(ep2.exploration.epsilon.floor == 0.05);
}

TEST_CASE("reports render in both formats") {
  const std::vector<CheckRow> rows{{"contraction", "junction-1", 0.85, 0.9, 200, true},
                                   {"noise", "junction-1", 7.0, 3.0, 100, false}};
  CHECK(report_csv(rows) ==
        "check,subject,value,tolerance,samples,verdict\n"
        "contraction,junction-1,0.85,0.9,200,pass\n"
        "noise,junction-1,7,3,100,fail\n");
  CHECK(report_text(rows) ==
        "[pass] contraction (junction-1): value=0.85 tolerance=0.9 samples=200\n"
        "[FAIL] noise (junction-1): value=7 tolerance=3 samples=100\n"
        "2 checks, 1 failure\n");
}

TEST_CASE("training writes a complete, reproducible output set") {
  TempDir dir("train");
  ExperimentConfig config;
  config.learning.cycles = 40;
  config.output_dir = dir.str("a");

  std::ostringstream log;
  const RunManifest manifest = run_train(config, RunOptions{}, log);

  CHECK(manifest.command == "train");
  CHECK(manifest.version == kVersion);
  CHECK(manifest.config_hash == config_hash(config));
  CHECK(manifest.seed == 1);
  CHECK(manifest.rng_algorithm == "mt19937_64");
  CHECK(looks_like_utc(manifest.started));
  CHECK(looks_like_utc(manifest.finished));
  CHECK(manifest.outputs ==
        std::vector<std::string>{"cycles.csv", "manifest.json", "qtable_j1.txt", "qtable_j2.txt",
                                 "qtable_j3.txt", "trace.csv"});
  for (const std::string& name : manifest.outputs) CHECK(fs::exists(dir.path / "a" / name));
  CHECK(manifest.stats.at("cycles") == 40);
  CHECK(manifest.stats.at("agents") == 3);
  CHECK(manifest.stats.at("sup_q_norm") <= 60.0);

  const std::string text = serialize_manifest(manifest);
  CHECK(text.find("\"command\": \"train\"") != std::string::npos);
  CHECK(text.find("\"qtable_j2.txt\"") != std::string::npos);

  const QTableSnapshot snap = read_qtable_file(dir.str("a/qtable_j2.txt"));
  CHECK(snap.table.junction == 2);
  CHECK(snap.table.n_states == 81);
  CHECK(snap.discount == 0.9);

  // same seed, fresh directory: identical artifacts
  ExperimentConfig again = config;
  again.output_dir = dir.str("b");
  run_train(again, RunOptions{}, log);
  for (const char* name : {"trace.csv", "cycles.csv", "qtable_j1.txt", "qtable_j3.txt"})
    CHECK(read_text_file(dir.str("a/") + name) == read_text_file(dir.str("b/") + name));

  // an overridden seed must change the trajectory
  ExperimentConfig reseeded = config;
  reseeded.output_dir = dir.str("c");
  RunOptions options;
  options.seed = 7;
  const RunManifest reseeded_manifest = run_train(reseeded, options, log);
  CHECK(reseeded_manifest.seed == 7);
  CHECK(read_text_file(dir.str("a/trace.csv")) != read_text_file(dir.str("c/trace.csv")));
}

TEST_CASE("verification writes reports and counts failures") {
  TempDir dir("verify");
  ExperimentConfig config = small_junction_config();
  config.output_dir = dir.str("ok");
  config.audits = {{"step-schedule", {}}, {"contraction", {{"trials", 40.0}}}};

  std::ostringstream log;
  const VerifyOutcome outcome = run_verify(config, RunOptions{}, log);
  CHECK(outcome.manifest.command == "verify");
  REQUIRE(outcome.rows.size() == 2);
  CHECK(outcome.rows[0].check == "step-schedule");
  CHECK(outcome.rows[1].check == "contraction");
  CHECK(outcome.all_passed());
  CHECK(outcome.failures == 0);
  CHECK(read_text_file(dir.str("ok/report.csv")) == report_csv(outcome.rows));
  CHECK(read_text_file(dir.str("ok/report.txt")) == report_text(outcome.rows));
  CHECK(fs::exists(dir.str("ok/manifest.json")));
  CHECK(outcome.rows[1].value <= outcome.rows[1].tolerance);

  ExperimentConfig failing = small_junction_config();
  failing.output_dir = dir.str("bad");
  failing.learning.schedule = "constant 0.1";
  failing.audits = {{"step-schedule", {}}};
  const VerifyOutcome failed = run_verify(failing, RunOptions{}, log);
  CHECK(failed.failures == 1);
  CHECK_FALSE(failed.all_passed());
  CHECK_FALSE(failed.rows[0].pass);
}

TEST_CASE("baseline evaluation compares three policies") {
  TempDir dir("baselines");
  ExperimentConfig config = small_junction_config();
  config.output_dir = dir.str("out");
  config.baselines.seeds = 2;
  config.baselines.eval_window = 25;

  const std::vector<PolicyEvaluation> evals = evaluate_baselines(config, 1, nullptr);
  REQUIRE(evals.size() == 3);
  CHECK(evals[0].policy == "learned");
  CHECK(evals[1].policy == "fixed");
  CHECK(evals[2].policy == "random");
  for (const PolicyEvaluation& e : evals) {
    CHECK(e.seeds == 2);
    CHECK(e.mean_cost >= 0.0);
    CHECK(e.mean_cost <= 6.0);
    CHECK(e.std_error >= 0.0);
  }

  std::ostringstream log;
  const RunManifest manifest = run_baselines(config, RunOptions{}, log);
  CHECK(manifest.command == "baselines");
  const std::string csv = read_text_file(dir.str("out/baselines.csv"));
  CHECK(csv.substr(0, csv.find('\n')) == "policy,mean_cost,stderr,seeds");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.find("learned,") != std::string::npos);
  CHECK(csv.find("random,") != std::string::npos);
}

TEST_CASE("process estimation writes a loadable model") {
  TempDir dir("mdp");
  ExperimentConfig config = small_junction_config();
  config.output_dir = dir.str("out");
  config.mdp.samples_per_pair = 25;

  std::ostringstream log;
  const RunManifest manifest = run_make_mdp(config, RunOptions{}, log);
  CHECK(manifest.command == "make-mdp");
  CHECK(manifest.stats.at("states") == 18);
  CHECK(manifest.stats.at("pairs") == 54);
  CHECK(manifest.stats.at("rollouts") == 54.0 * 25);

  const ExplicitMDP mdp = read_mdp_file(dir.str("out/mdp_j1.txt"));
  CHECK_NOTHROW(mdp.validate());
  CHECK(mdp.n_states == 18);
  CHECK(mdp.discount == 0.9);
}

TEST_CASE("show recognizes every artifact kind") {
  TempDir dir("show");
  ExperimentConfig config = small_junction_config();
  config.learning.cycles = 30;
  config.output_dir = dir.str("run");
  std::ostringstream log;
  run_train(config, RunOptions{}, log);

  const std::string config_path = dir.str("config.json");
  write_text_file(config_path, serialize_config(config));
  const std::string network_path = dir.str("net.json");
  write_network_file(network_path, build_three_junction_example());

  for (const std::string path :
       {dir.str("run/trace.csv"), dir.str("run/cycles.csv"), dir.str("run/qtable_j1.txt"),
        dir.str("run/manifest.json"), config_path, network_path}) {
    std::ostringstream out;
    CHECK_MESSAGE(show_file(path, out), "unrecognized: ", path);
    CHECK_FALSE(out.str().empty());
  }

  std::ostringstream out;
  CHECK(show_file(config_path, out));
  CHECK(out.str().find(config_hash(config)) != std::string::npos);

  const std::string junk = dir.str("junk.bin");
  write_text_file(junk, "neither csv nor json\n");
  std::ostringstream sink;
  CHECK_FALSE(show_file(junk, sink));
  CHECK_THROWS_AS(show_file(dir.str("missing.txt"), sink), std::runtime_error);
}

}  // TEST_SUITE
