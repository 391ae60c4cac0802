// svs: train, evaluate and inspect self-play RLVR runs.
//
// Exit codes: 0 success, 1 usage or config error, 2 incomplete run,
// 3 backend transport failure. `verify` exits 1 when the answer is wrong.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "svs/backend.hpp"
#include "svs/config.hpp"
#include "svs/core.hpp"
#include "svs/evalkit.hpp"
#include "svs/svs.hpp"
#include "svs/toy.hpp"
#include "svs/verifier.hpp"

namespace fs = std::filesystem;
using namespace svs;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kIncomplete = 2;
constexpr int kTransport = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (char& c : f) {
    if (c == '_') c = '-';
  }
  return "--" + f;
}

// One option per RunConfig key; flags override the config file.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "Config file (key = value lines)");
    for (const auto& key : config::keys()) {
      std::string names = flag_name(key);
      if (key == "max_steps") names += ",--steps";
      const RunConfig defaults;
      app->add_option(names, values[key],
                      "config key: " + key + " (default " + config::get(defaults, key) + ")");
    }
  }

  RunConfig resolve(const CLI::App* app) const {
    RunConfig cfg;
    try {
      if (!config_path.empty()) config::apply_file(cfg, config_path);
      for (const auto& key : config::keys()) {
        if (app->count(flag_name(key)) > 0) config::set(cfg, key, values.at(key));
      }
      cfg.validate();
    } catch (const InvalidInput& e) {
      throw UsageError(std::string("config error: ") + e.what());
    }
    return cfg;
  }
};

std::vector<Problem> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open dataset '" + path + "'");
  try {
    auto problems = read_dataset_jsonl(in);
    if (problems.empty()) throw UsageError("dataset '" + path + "' has no problems");
    return problems;
  } catch (const InvalidInput& e) {
    throw UsageError("dataset '" + path + "': " + e.what());
  }
}

std::string read_text(const std::string& path) {
  if (path == "-") {
    return std::string(std::istreambuf_iterator<char>(std::cin), {});
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct BackendChoice {
  std::string kind = "toy";
  std::string fixture;
  std::string checkpoint;
  std::string record;

  void attach(CLI::App* app, bool allow_record) {
    app->add_option("--backend", kind, "Generation backend")
        ->check(CLI::IsMember({"toy", "http", "scripted"}));
    app->add_option("--fixture", fixture, "Transcript JSON for the scripted backend");
    app->add_option("--checkpoint", checkpoint, "Toy policy checkpoint to start from");
    if (allow_record) {
      app->add_option("--record", record, "Save every HTTP exchange as a scripted transcript");
    }
  }

  std::unique_ptr<Backend> make(const RunConfig& cfg, Transcript* transcript) const {
    if (kind == "toy") {
      auto policy = toy::ToyPolicy::base();
      if (!checkpoint.empty()) {
        try {
          policy = toy::ToyPolicy::load(checkpoint);
        } catch (const std::exception& e) {
          throw UsageError(e.what());
        }
      }
      return std::make_unique<toy::ToyBackend>(std::move(policy));
    }
    if (kind == "scripted") {
      if (fixture.empty()) throw UsageError("--backend scripted needs --fixture");
      try {
        return std::make_unique<ScriptedBackend>(Transcript::load(fixture));
      } catch (const InvalidInput& e) {
        throw UsageError(e.what());
      } catch (const nlohmann::json::exception& e) {
        throw UsageError("fixture '" + fixture + "': " + e.what());
      }
    }
    auto http = make_http_backend(cfg);
    if (!record.empty() && transcript) http->record_to(transcript);
    return http;
  }
};

// Forwards generation; never updates, so every batch is exported.
class ExportOnly : public Backend {
 public:
  explicit ExportOnly(Backend& inner) : inner_(inner) {}
  std::vector<Rollout> generate(const GenerationRequest& r) override {
    return inner_.generate(r);
  }
  std::string name() const override { return inner_.name(); }
  bool exact_entropy() const override { return inner_.exact_entropy(); }
  bool has_logprobs() const override { return inner_.has_logprobs(); }

 private:
  Backend& inner_;
};

void write_batch(const fs::path& dir, const std::string& mode, int step,
                 const std::vector<ExperienceSample>& samples) {
  fs::create_directories(dir);
  char name[64];
  std::snprintf(name, sizeof name, "%s-step-%04d.jsonl", mode.c_str(), step);
  std::ofstream out(dir / name);
  if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  write_jsonl(out, samples);
}

std::vector<Mode> parse_modes(const std::string& s) {
  if (s == "both") return {Mode::RlvrBaseline, Mode::Svs};
  try {
    return {mode_from_string(s)};
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
}

// ---- train / export --------------------------------------------------------

struct TrainArgs {
  ConfigFlags flags;
  BackendChoice backend;
  std::string mode = "svs";
  std::string dataset;
  std::string heldout;
  std::string out = "svs-out";
  bool verbose = false;
};

void attach_train(CLI::App* app, TrainArgs& a, bool with_mode) {
  a.flags.attach(app);
  a.backend.attach(app, true);
  if (with_mode) {
    app->add_option("--mode", a.mode, "svs, rlvr-baseline, or both")
        ->check(CLI::IsMember({"svs", "rlvr-baseline", "rlvr_baseline", "both"}));
  }
  app->add_option("--dataset", a.dataset,
                  "Training problems, JSON Lines {id, problem, answer}; the toy backend "
                  "generates its own when omitted");
  app->add_option("--heldout", a.heldout, "Held-out problems for pass@k evaluation");
  app->add_option("--out", a.out, "Output directory (created if absent)");
  app->add_flag("-v,--verbose", a.verbose, "Print one line per step");
}

int run_train(const CLI::App* app, const TrainArgs& a, bool export_only) {
  const RunConfig cfg = a.flags.resolve(app);
  const auto modes = parse_modes(a.mode);
  std::vector<Problem> dataset;
  std::vector<Problem> heldout;
  if (!a.dataset.empty()) {
    dataset = load_dataset(a.dataset);
  } else if (a.backend.kind == "toy") {
    dataset = toy::toy_training_set(cfg);
  } else {
    throw UsageError("--dataset is required with --backend " + a.backend.kind);
  }
  if (!a.heldout.empty()) {
    heldout = load_dataset(a.heldout);
  } else if (a.backend.kind == "toy" && a.dataset.empty() && !export_only) {
    heldout = toy::toy_heldout_set(cfg);
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  {
    std::ofstream resolved(out / "config.txt");
    resolved << config::to_text(cfg);
  }

  std::vector<eval::RunSummary> runs;
  bool complete = true;
  for (Mode mode : modes) {
    Transcript transcript;
    auto backend = a.backend.make(cfg, &transcript);
    ExportOnly exporter(*backend);
    Backend& active = export_only ? static_cast<Backend&>(exporter) : *backend;
    const std::string mode_name(to_string(mode));

    TrainingHooks hooks;
    hooks.heldout = heldout;
    const bool trainable = !export_only && a.backend.kind == "toy";
    hooks.on_batch = [&](int step, const std::vector<ExperienceSample>& samples) {
      if (cfg.snapshot_buffer || !trainable) write_batch(out / "batches", mode_name, step, samples);
    };
    if (a.verbose) {
      hooks.on_step = [&](const eval::StepMetrics& m) {
        std::cerr << mode_name << " " << eval::metrics_csv_row(m) << '\n';
      };
    }
    auto summary = run_training(dataset, active, cfg, mode, hooks);
    if (!a.backend.record.empty()) transcript.save(a.backend.record);
    if (auto* toy_backend = dynamic_cast<toy::ToyBackend*>(backend.get());
        toy_backend && trainable) {
      toy_backend->policy().save((out / (mode_name + ".policy.json")).string());
    }
    if (!summary.complete) {
      complete = false;
      std::cerr << "run incomplete (" << mode_name << "): " << summary.error << '\n';
    }
    std::cout << mode_name << ": " << summary.steps.size() << " steps, entropy "
              << format_real(eval::initial_entropy(summary)) << " -> "
              << format_real(eval::final_entropy(summary));
    if (!summary.evals.empty()) {
      for (const auto& [k, v] : summary.evals.back().pass_at_k) {
        std::cout << ", pass@" << k << " " << format_real(v);
      }
    }
    std::cout << '\n';
    runs.push_back(std::move(summary));
  }
  eval::write_report(out.string(), runs);
  return complete ? kOk : kIncomplete;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  ConfigFlags flags;
  BackendChoice backend;
  std::string records;
  std::string dataset;
  std::string k_list;
  int n = 0;
  std::string out;
};

std::vector<int> parse_k_list(const std::string& s) {
  RunConfig tmp;
  try {
    config::set(tmp, "eval_k", s);
  } catch (const InvalidInput& e) {
    throw UsageError(std::string("--k: ") + e.what());
  }
  return tmp.eval_k;
}

int run_eval(const CLI::App* app, const EvalArgs& a) {
  RunConfig cfg = a.flags.resolve(app);
  const std::vector<int> ks = a.k_list.empty() ? cfg.eval_k : parse_k_list(a.k_list);
  std::vector<eval::EvalRecord> records;
  if (!a.records.empty()) {
    std::ifstream in(a.records);
    if (!in) throw UsageError("cannot open records '" + a.records + "'");
    try {
      records = eval::read_eval_records_jsonl(in);
    } catch (const InvalidInput& e) {
      throw UsageError(e.what());
    }
  } else {
    const int n = a.n > 0 ? a.n : cfg.eval_n;
    for (int k : ks) {
      if (k > n) {
        throw UsageError("n = " + std::to_string(n) + " is smaller than k = " +
                         std::to_string(k));
      }
    }
    std::vector<Problem> problems;
    if (!a.dataset.empty()) {
      problems = load_dataset(a.dataset);
    } else if (a.backend.kind == "toy") {
      problems = toy::toy_heldout_set(cfg);
    } else {
      throw UsageError("--dataset is required with --backend " + a.backend.kind);
    }
    auto backend = a.backend.make(cfg, nullptr);
    records = collect_eval_records(problems, *backend, cfg, n, "eval");
  }
  eval::PassAtKTable table;
  try {
    table = eval::pass_at_k_table(records, ks);
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }

  std::ostringstream csv;
  csv << "problems,n";
  for (int k : ks) csv << ",pass@" << k;
  csv << ",avg@n\n" << records.size() << ',' << table.n;
  for (int k : ks) csv << ',' << format_real(table.pass_at_k.at(k));
  csv << ',' << format_real(table.avg_at_n) << '\n';
  std::cout << csv.str();

  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream(fs::path(a.out) / "eval.csv") << csv.str();
    std::ofstream rec(fs::path(a.out) / "eval_records.jsonl");
    eval::write_eval_records_jsonl(rec, records);
  }
  return kOk;
}

// ---- verify ----------------------------------------------------------------

int run_verify(const std::string& gold, const std::string& text_path) {
  const std::string text = read_text(text_path);
  const auto boxed = verifier::extract_boxed(text);
  const auto gold_c = verifier::normalize(gold);
  if (!boxed) {
    std::cout << "extracted: (none)\n";
  } else {
    std::cout << "extracted: " << *boxed << '\n'
              << "canonical: " << verifier::normalize(*boxed).normalized << '\n';
  }
  const double reward = verifier::correctness_reward(text, gold);
  std::cout << "gold: " << gold_c.normalized << '\n' << "reward: " << reward << '\n';
  return reward == 1.0 ? kOk : 1;
}

// ---- synth-dry-run ---------------------------------------------------------

struct SynthArgs {
  ConfigFlags flags;
  BackendChoice backend;
  std::string solution;
  std::string gold;
  bool no_solve = false;
};

int run_synth(const CLI::App* app, const SynthArgs& a) {
  const RunConfig cfg = a.flags.resolve(app);
  const std::string solution = read_text(a.solution);
  if (solution.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw UsageError("solution file '" + a.solution + "' is empty");
  }
  std::string gold = a.gold;
  if (gold.empty()) {
    auto boxed = verifier::extract_boxed(solution);
    if (!boxed) throw UsageError("solution has no \\boxed{} answer; pass --gold");
    gold = *boxed;
  }
  auto backend = a.backend.make(cfg, nullptr);

  SynthesisCandidate candidate;
  candidate.parent = Problem::original("dry-run", "(source problem)", gold);
  candidate.source_solution.text = solution;
  candidate.synthesis_prompt = build_synthesis_prompt(solution);
  std::cout << "=== prompt ===\n" << candidate.synthesis_prompt << "\n=== variants ===\n";

  if (a.no_solve) {
    GenerationRequest req;
    req.prompt = candidate.synthesis_prompt;
    req.n = cfg.G_v;
    req.temperature = cfg.temperature;
    req.top_p = cfg.top_p;
    req.max_tokens = cfg.max_tokens;
    req.seed = derive_seed(cfg.seed, "step/0/synth/dry-run/0");
    const auto completions = backend->generate(req);
    for (std::size_t j = 0; j < completions.size(); ++j) {
      const auto v = completions[j].finish_reason == FinishReason::Length
                         ? std::nullopt
                         : extract_synthetic_problem(completions[j].text);
      std::cout << '[' << j << "] " << (v ? *v : "extraction failed") << '\n';
    }
    return kOk;
  }

  auto solved = synthesis_phase({candidate}, *backend, cfg, 0).front();
  const auto rewards = shape_synthesis_rewards(solved, cfg);
  for (std::size_t j = 0; j < solved.variants.size(); ++j) {
    const auto& v = solved.variants[j];
    std::cout << '[' << j << "] ";
    if (v.extraction_failed) {
      std::cout << "extraction failed";
    } else {
      std::cout << v.problem->statement << "  accuracy " << format_real(v.accuracy);
      if (v.duplicate_of) std::cout << " (duplicate of " << *v.duplicate_of << ")";
    }
    std::cout << "  reward " << rewards[j] << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-play GRPO trainer that grows its own problem variants."};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Run the training loop and write metrics");
  attach_train(train, train_args, true);

  TrainArgs export_args;
  auto* exp = app.add_subcommand(
      "export", "Collect experience for max_steps steps without updating the policy and "
                "write every batch as JSON Lines");
  attach_train(exp, export_args, true);

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Pass@k table from records or a backend");
  eval_args.flags.attach(ev);
  eval_args.backend.attach(ev, false);
  ev->add_option("--records", eval_args.records, "Eval records, JSON Lines {problem_id, n, c}");
  ev->add_option("--dataset", eval_args.dataset, "Problems to evaluate");
  ev->add_option("--n", eval_args.n, "Attempts per problem (config key: eval_n)");
  ev->add_option("--k", eval_args.k_list, "Comma-separated k values (config key: eval_k)");
  ev->add_option("--out", eval_args.out, "Output directory");

  std::string verify_gold, verify_text = "-";
  auto* verify = app.add_subcommand("verify", "Check a completion against a gold answer");
  verify->add_option("--gold", verify_gold, "Gold answer")->required();
  verify->add_option("--text", verify_text, "Completion file, or - for stdin");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth-dry-run",
                                   "Print the synthesis prompt and the variants it yields");
  synth_args.flags.attach(synth);
  synth_args.backend.attach(synth, false);
  synth->add_option("--solution", synth_args.solution, "File holding a correct solution")
      ->required();
  synth->add_option("--gold", synth_args.gold, "Gold answer (default: the solution's box)");
  synth->add_flag("--no-solve", synth_args.no_solve, "Skip solving the variants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return run_train(train, train_args, false);
    if (*exp) return run_train(exp, export_args, true);
    if (*ev) return run_eval(ev, eval_args);
    if (*verify) return run_verify(verify_gold, verify_text);
    if (*synth) return run_synth(synth, synth_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const TransportError& e) {
    std::cerr << "backend failure: " << e.what();
    if (!e.problem_id().empty()) std::cerr << " (problem " << e.problem_id() << ")";
    std::cerr << '\n';
    return kTransport;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
