// gdvrl: simulate, train, eval, grade and serve.
//
// Exit codes: 0 success, 2 invalid flags or config, 3 corpus / case /
// trajectory errors, 4 backend unavailable.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gdvrl/backends.hpp"
#include "gdvrl/case_store.hpp"
#include "gdvrl/grpo.hpp"
#include "gdvrl/metrics.hpp"
#include "gdvrl/orchestration.hpp"
#include "gdvrl/policy.hpp"
#include "gdvrl/remote_backend.hpp"
#include "gdvrl/reward.hpp"
#include "gdvrl/service.hpp"
#include "gdvrl/synthetic.hpp"

namespace fs = std::filesystem;
using namespace gdvrl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitBackend = 4;

struct ExitError : std::runtime_error {
  int code;
  ExitError(int c, const std::string& what) : std::runtime_error(what), code(c) {}
};

[[noreturn]] void fail(int code, const std::string& what) { throw ExitError(code, what); }

std::vector<CaseRecord> load_corpus(const std::string& path) {
  if (!fs::exists(path)) fail(kExitData, "corpus not found: " + path);
  try {
    return load_cases(path);
  } catch (const SchemaError& e) {
    fail(kExitData, "corpus " + path + ": " + e.what());
  } catch (const std::runtime_error& e) {
    fail(kExitData, "corpus " + path + ": " + e.what());
  }
}

SplitCases load_splits(const std::vector<CaseRecord>& cases, const std::string& path) {
  if (!fs::exists(path)) fail(kExitData, "split file not found: " + path);
  try {
    return split_by_panel(cases, load_split_assignment(path));
  } catch (const std::runtime_error& e) {
    fail(kExitData, "split file " + path + ": " + e.what());
  }
}

TrainConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) fail(kExitUsage, "cannot open config: " + path);
  const auto j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) fail(kExitUsage, "config is not valid JSON: " + path);
  return train_config_from_json(j);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(kExitUsage, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

struct SimulateArgs {
  int cases = 200;
  std::uint64_t seed = 0;
  std::vector<double> prevalence;
  int panels = 10;
  std::string out;
  std::string splits_out;
};

int cmd_simulate(const SimulateArgs& a) {
  CorpusConfig cfg;
  cfg.cases = a.cases;
  cfg.panels = a.panels;
  if (!a.prevalence.empty()) {
    if (a.prevalence.size() != cfg.prevalence.size()) fail(kExitUsage, "--prevalence takes exactly 6 values");
    std::copy(a.prevalence.begin(), a.prevalence.end(), cfg.prevalence.begin());
  }
  try {
    cfg.validate();
  } catch (const InvalidConfig& e) {
    fail(kExitUsage, e.what());
  }
  const auto cases = generate_synthetic_corpus(cfg, a.seed);
  std::ostringstream corpus;
  write_cases(corpus, cases);
  write_text(a.out, corpus.str());

  const std::string splits = a.splits_out.empty() ? a.out + ".splits.json" : a.splits_out;
  write_json(splits, to_json(synthetic_split(cfg, a.seed)));

  RunManifest m;
  m.command = "simulate";
  m.seed = a.seed;
  m.config = {{"cases", cfg.cases}, {"panels", cfg.panels}, {"prevalence", cfg.prevalence},
              {"signal", cfg.signal}, {"noise", cfg.noise}};
  m.output_dir = fs::path(a.out).parent_path().string();
  m.outputs[a.out] = file_hash(a.out);
  m.outputs[splits] = file_hash(splits);
  write_json(a.out + ".manifest.json", to_json(m));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string corpus;
  std::string splits;
  std::string scheme;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> learning_rate;
  std::optional<int> epochs;
  std::string out;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg;
  try {
    cfg = load_config(a.config);
    if (!a.scheme.empty()) cfg.scheme = parse_scheme(a.scheme);
    if (a.seed) cfg.seed = *a.seed;
    if (a.learning_rate) cfg.learning_rate = *a.learning_rate;
    if (a.epochs) cfg.epochs = *a.epochs;
    cfg.validate();
  } catch (const InvalidConfig& e) {
    fail(kExitUsage, e.what());
  }
  const auto cases = load_corpus(a.corpus);
  const auto split = load_splits(cases, a.splits);
  if (split.train.empty()) fail(kExitData, "training split is empty");

  const fs::path out(a.out);
  fs::create_directories(out / "checkpoints");
  const auto hash = config_hash(cfg);

  std::ostringstream curves;
  curves << curve_csv_header() << '\n';
  TrainResult result;
  try {
    result = train(split.train, split.dev, cfg, std::nullopt, [&](const CurvePoint& p) {
      curves << curve_csv_row(p) << '\n';
      if (!a.quiet && p.step % 10 == 0) {
        std::cerr << "step " << p.step << " mean_reward " << p.mean_reward << '\n';
      }
    });
  } catch (const NonFiniteLoss& e) {
    std::cerr << "error: " << e.what() << '\n';
    write_text(out / "curves.csv", curves.str());
    return 1;
  }
  write_text(out / "curves.csv", curves.str());
  for (std::size_t i = 0; i < result.checkpoints.size(); ++i) {
    std::ostringstream name;
    name << "epoch_" << std::setw(3) << std::setfill('0') << i + 1 << ".json";
    write_json(out / "checkpoints" / name.str(), checkpoint_to_json(result.checkpoints[i], hash));
  }
  write_json(out / "policy.json", checkpoint_to_json(result.policy, hash));

  RunManifest m;
  m.command = "train";
  m.seed = cfg.seed;
  m.config = to_json(cfg);
  m.config["config_hash"] = hash;
  m.inputs[a.corpus] = file_hash(a.corpus);
  m.inputs[a.splits] = file_hash(a.splits);
  m.output_dir = a.out;
  m.outputs["curves.csv"] = file_hash((out / "curves.csv").string());
  m.outputs["policy.json"] = file_hash((out / "policy.json").string());
  write_json(out / "manifest.json", to_json(m));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string corpus;
  std::string splits;
  std::string checkpoint;
  std::string policy;
  std::string trajectories;
  std::string backend = "oracle";
  std::string mode = "live";
  std::string decoding = "greedy";
  std::string endpoint = "http://127.0.0.1:8081";
  double miss_rate = 0.1;
  double false_alarm_rate = 0.05;
  std::uint64_t seed = 0;
  std::string out;
  std::string trajectories_out;
};

int cmd_eval(const EvalArgs& a) {
  const int sources = (a.checkpoint.empty() ? 0 : 1) + (a.policy.empty() ? 0 : 1) + (a.trajectories.empty() ? 0 : 1);
  if (sources != 1) fail(kExitUsage, "exactly one of --checkpoint, --policy, --trajectories is required");
  const auto cases = load_corpus(a.corpus);
  const auto split = load_splits(cases, a.splits);
  const auto& test = split.test;

  std::vector<Trajectory> log;
  if (!a.trajectories.empty()) {
    std::ifstream in(a.trajectories);
    if (!in) fail(kExitData, "cannot open trajectories: " + a.trajectories);
    try {
      log = load_trajectories(in);
    } catch (const MalformedTrajectory& e) {
      fail(kExitData, e.what());
    }
  } else {
    if (test.empty()) fail(kExitData, "test split is empty");
    std::unique_ptr<SupervisorPolicy> policy;
    if (!a.checkpoint.empty()) {
      ParametricSupervisorPolicy p;
      try {
        std::ifstream in(a.checkpoint);
        if (!in) fail(kExitData, "cannot open checkpoint: " + a.checkpoint);
        p = checkpoint_from_json(json::parse(in));
      } catch (const json::exception& e) {
        fail(kExitData, std::string("invalid checkpoint: ") + e.what());
      } catch (const InvalidConfig& e) {
        fail(kExitData, std::string("invalid checkpoint: ") + e.what());
      }
      const auto decoding = a.decoding == "sample" ? Decoding::Sample : Decoding::Greedy;
      policy = std::make_unique<ParametricSupervisorAgent>(p, decoding, a.seed);
    } else if (a.policy == "oracle") {
      policy = std::make_unique<OracleSupervisorPolicy>();
    } else if (a.policy == "random") {
      policy = std::make_unique<RandomSupervisorPolicy>(a.seed);
    } else if (a.policy == "untrained") {
      policy = std::make_unique<ParametricSupervisorAgent>(ParametricSupervisorPolicy(0.8), Decoding::Greedy, a.seed);
    } else {
      fail(kExitUsage, "unknown --policy '" + a.policy + "'");
    }

    std::unique_ptr<AgentBackend> backend;
    if (a.backend == "oracle") {
      backend = std::make_unique<OracleBackend>();
    } else if (a.backend == "noisy") {
      try {
        backend = std::make_unique<NoisyOracleBackend>(NoiseSpec{a.miss_rate, a.false_alarm_rate, a.seed});
      } catch (const InvalidConfig& e) {
        fail(kExitUsage, e.what());
      }
    } else if (a.backend == "remote") {
      backend = std::make_unique<RemoteBackend>(a.endpoint);
    } else {
      fail(kExitUsage, "unknown --backend '" + a.backend + "'");
    }
    const auto mode = a.mode == "ground_truth" ? ObservationMode::GroundTruth : ObservationMode::Live;
    try {
      for (const auto& c : test) log.push_back(run_supervisor_episode(*policy, c, mode, backend.get()));
    } catch (const BackendUnavailable& e) {
      fail(kExitBackend, e.what());
    } catch (const MalformedResponse& e) {
      fail(kExitBackend, e.what());
    }
  }

  MetricsReport report;
  try {
    report = evaluate_run(log, test);
  } catch (const CaseMismatch& e) {
    fail(kExitData, e.what());
  } catch (const EmptyInput&) {
    fail(kExitData, "no trajectories to evaluate");
  }

  if (!a.trajectories_out.empty()) {
    std::ostringstream lines;
    for (const auto& t : log) lines << to_json(t).dump() << '\n';
    write_text(a.trajectories_out, lines.str());
  }
  const auto text = to_json(report).dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text(a.out, text);
    RunManifest m;
    m.command = "eval";
    m.seed = a.seed;
    m.config = {{"checkpoint", a.checkpoint}, {"policy", a.policy}, {"backend", a.backend},
                {"mode", a.mode}, {"decoding", a.decoding}};
    m.inputs[a.corpus] = file_hash(a.corpus);
    m.inputs[a.splits] = file_hash(a.splits);
    if (!a.checkpoint.empty()) m.inputs[a.checkpoint] = file_hash(a.checkpoint);
    if (!a.trajectories.empty()) m.inputs[a.trajectories] = file_hash(a.trajectories);
    m.output_dir = fs::path(a.out).parent_path().string();
    m.outputs[a.out] = file_hash(a.out);
    write_json(a.out + ".manifest.json", to_json(m));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GradeArgs {
  std::string corpus;
  std::string trajectories;
  std::string scheme = "hybrid";
  std::string config;
  std::string out;
};

std::unique_ptr<Grader> make_grader(const std::string& corpus, const std::string& scheme, const std::string& config) {
  RewardScheme s{};
  RewardConfig reward;
  try {
    s = parse_scheme(scheme);
    reward = load_config(config).reward;
    reward.validate();
  } catch (const InvalidConfig& e) {
    fail(kExitUsage, e.what());
  }
  return std::make_unique<Grader>(load_corpus(corpus), s, reward);
}

int cmd_grade(const GradeArgs& a) {
  const auto grader = make_grader(a.corpus, a.scheme, a.config);
  std::ifstream in(a.trajectories);
  if (!in) fail(kExitData, "cannot open trajectories: " + a.trajectories);
  GradeFileResult result;
  try {
    result = grade_stream(*grader, in);
  } catch (const MalformedTrajectory& e) {
    fail(kExitData, e.what());
  }
  if (!result.unresolved.empty()) {
    std::string msg = "unresolvable case keys:";
    for (const auto& k : result.unresolved) msg += "\n  " + k;
    fail(kExitData, msg);
  }
  std::ostringstream lines;
  for (const auto& l : result.lines) lines << l << '\n';
  if (a.out.empty()) {
    std::cout << lines.str();
  } else {
    write_text(a.out, lines.str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string corpus;
  std::string scheme = "hybrid";
  std::string config;
  std::string host = "127.0.0.1";
  int port = 8080;
};

httplib::Server* g_server = nullptr;

int cmd_serve(const ServeArgs& a) {
  const auto grader = make_grader(a.corpus, a.scheme, a.config);
  httplib::Server server;
  install_routes(server, *grader);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server != nullptr) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server != nullptr) g_server->stop(); });
  if (!server.bind_to_port(a.host, a.port)) fail(kExitUsage, "cannot bind " + a.host + ":" + std::to_string(a.port));
  std::cerr << "serving " << grader->size() << " cases on " << a.host << ":" << a.port << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gene-disease validity curation: rewards, GRPO training and evaluation"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic corpus and panel split");
  simulate->add_option("--cases", sim.cases, "Number of cases")->check(CLI::Range(1, 1000000));
  simulate->add_option("--seed", sim.seed, "Random seed");
  simulate->add_option("--prevalence", sim.prevalence, "Per-category evidence prevalence (6 values)")
      ->expected(6);
  simulate->add_option("--panels", sim.panels, "Number of expert panels")->check(CLI::Range(3, 1000));
  simulate->add_option("--out", sim.out, "Corpus JSONL path")->required();
  simulate->add_option("--splits-out", sim.splits_out, "Split file path (default <out>.splits.json)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the supervisor policy with GRPO");
  train_cmd->add_option("--corpus", tr.corpus, "Corpus JSONL")->required();
  train_cmd->add_option("--splits", tr.splits, "Split file")->required();
  train_cmd->add_option("--scheme", tr.scheme, "Reward scheme: outcome|hybrid");
  train_cmd->add_option("--config", tr.config, "Flat JSON config file");
  train_cmd->add_option("--seed", tr.seed, "Random seed");
  train_cmd->add_option("--learning-rate", tr.learning_rate, "Learning rate");
  train_cmd->add_option("--epochs", tr.epochs, "Epochs");
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_flag("--quiet", tr.quiet, "Suppress progress output");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a policy or trajectory log on the test split");
  eval->add_option("--corpus", ev.corpus, "Corpus JSONL")->required();
  eval->add_option("--splits", ev.splits, "Split file")->required();
  eval->add_option("--checkpoint", ev.checkpoint, "Trained policy checkpoint");
  eval->add_option("--policy", ev.policy, "Built-in policy: oracle|random|untrained");
  eval->add_option("--trajectories", ev.trajectories, "Evaluate an existing trajectory log");
  eval->add_option("--backend", ev.backend, "Sub-agent backend: oracle|noisy|remote");
  eval->add_option("--mode", ev.mode, "Observation mode: live|ground_truth")
      ->check(CLI::IsMember({"live", "ground_truth"}));
  eval->add_option("--decoding", ev.decoding, "Checkpoint decoding: greedy|sample")
      ->check(CLI::IsMember({"greedy", "sample"}));
  eval->add_option("--endpoint", ev.endpoint, "Remote sub-agent endpoint");
  eval->add_option("--miss-rate", ev.miss_rate, "Noisy backend miss rate");
  eval->add_option("--false-alarm-rate", ev.false_alarm_rate, "Noisy backend false alarm rate");
  eval->add_option("--seed", ev.seed, "Random seed");
  eval->add_option("--out", ev.out, "Report path (default stdout)");
  eval->add_option("--trajectories-out", ev.trajectories_out, "Write the episode log as JSONL");

  GradeArgs gr;
  auto* grade = app.add_subcommand("grade", "Grade a trajectory log");
  grade->add_option("--corpus", gr.corpus, "Corpus JSONL")->required();
  grade->add_option("--trajectories", gr.trajectories, "Trajectory JSONL")->required();
  grade->add_option("--scheme", gr.scheme, "Reward scheme: outcome|hybrid");
  grade->add_option("--config", gr.config, "Flat JSON config file (reward keys)");
  grade->add_option("--out", gr.out, "Output JSONL (default stdout)");

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Serve POST /v1/grade and GET /healthz");
  serve->add_option("--corpus", sv.corpus, "Corpus JSONL")->required();
  serve->add_option("--scheme", sv.scheme, "Reward scheme: outcome|hybrid");
  serve->add_option("--config", sv.config, "Flat JSON config file (reward keys)");
  serve->add_option("--host", sv.host, "Bind address");
  serve->add_option("--port", sv.port, "Port")->check(CLI::Range(0, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim);
    if (*train_cmd) return cmd_train(tr);
    if (*eval) return cmd_eval(ev);
    if (*grade) return cmd_grade(gr);
    if (*serve) return cmd_serve(sv);
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}
