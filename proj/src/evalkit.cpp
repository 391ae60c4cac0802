#include "svs/evalkit.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace svs::eval {

void EvalRecord::validate() const {
  if (n < 1) throw InvalidInput("record '" + problem_id + "': n must be >= 1");
  if (c < 0 || c > n) throw InvalidInput("record '" + problem_id + "': c must lie in [0, n]");
}

namespace {

void check_args(int n, int c, int k) {
  if (n < 1) throw InvalidInput("pass_at_k: n must be >= 1");
  if (c < 0 || c > n) throw InvalidInput("pass_at_k: c must lie in [0, n]");
  if (k < 1 || k > n) {
    throw InvalidInput("pass_at_k: k = " + std::to_string(k) + " must lie in [1, n = " +
                       std::to_string(n) + "]");
  }
}

}  // namespace

double pass_at_k(int n, int c, int k) {
  check_args(n, c, k);
  if (n - c < k) return 1.0;
  double miss = 1.0;
  for (int i = 0; i < k; ++i) {
    miss *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
  }
  return 1.0 - miss;
}

boost::multiprecision::cpp_rational pass_at_k_exact(int n, int c, int k) {
  check_args(n, c, k);
  using boost::multiprecision::cpp_rational;
  if (n - c < k) return cpp_rational(1);
  cpp_rational miss(1);
  for (int i = 0; i < k; ++i) miss *= cpp_rational(n - c - i, n - i);
  return cpp_rational(1) - miss;
}

double avg_at_n(const std::vector<EvalRecord>& records) {
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : records) {
    r.validate();
    sum += static_cast<double>(r.c) / r.n;
  }
  return sum / static_cast<double>(records.size());
}

double benchmark_pass_at_k(const std::vector<EvalRecord>& records, int k) {
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    r.validate();
    if (r.n < k) {
      throw InvalidInput("record " + std::to_string(i) + " ('" + r.problem_id +
                         "') has n = " + std::to_string(r.n) + " < k = " +
                         std::to_string(k));
    }
    sum += pass_at_k(r.n, r.c, k);
  }
  return sum / static_cast<double>(records.size());
}

std::vector<EvalRecord> read_eval_records_jsonl(std::istream& in) {
  std::vector<EvalRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EvalRecord r;
      r.problem_id = j.at("problem_id").get<std::string>();
      r.n = j.at("n").get<int>();
      r.c = j.at("c").get<int>();
      if (j.contains("entropies") && !j["entropies"].is_null()) {
        r.entropies = j["entropies"].get<std::vector<double>>();
      }
      r.validate();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("eval records line " + std::to_string(lineno) + ": " + e.what());
    } catch (const InvalidInput& e) {
      throw InvalidInput("eval records line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_eval_records_jsonl(std::ostream& out, const std::vector<EvalRecord>& records) {
  for (const auto& r : records) {
    std::string line = "{\"problem_id\":" + nlohmann::json(r.problem_id).dump() +
                       ",\"n\":" + std::to_string(r.n) + ",\"c\":" + std::to_string(r.c);
    if (r.entropies) {
      line += ",\"entropies\":[";
      for (std::size_t i = 0; i < r.entropies->size(); ++i) {
        if (i) line += ',';
        line += format_real((*r.entropies)[i]);
      }
      line += ']';
    }
    out << line << "}\n";
  }
}

// ---- reports ---------------------------------------------------------------

KindCounts KindCounts::of(const std::vector<ExperienceSample>& samples) {
  KindCounts k;
  for (const auto& s : samples) {
    switch (s.kind) {
      case SampleKind::OriginalSolve: ++k.original_solve; break;
      case SampleKind::Synthesis: ++k.synthesis; break;
      case SampleKind::SyntheticSolve: ++k.synthetic_solve; break;
    }
  }
  return k;
}

double initial_entropy(const RunSummary& run) {
  return run.steps.empty() ? 0.0 : run.steps.front().entropy;
}

double final_entropy(const RunSummary& run, int window) {
  if (run.steps.empty()) return 0.0;
  const std::size_t w = std::min<std::size_t>(std::max(window, 1), run.steps.size());
  double sum = 0.0;
  for (std::size_t i = run.steps.size() - w; i < run.steps.size(); ++i) {
    sum += run.steps[i].entropy;
  }
  return sum / static_cast<double>(w);
}

PassAtKTable pass_at_k_table(const std::vector<EvalRecord>& records,
                             const std::vector<int>& ks, int step) {
  PassAtKTable t;
  t.step = step;
  t.n = records.empty() ? 0 : records.front().n;
  for (int k : ks) t.pass_at_k[k] = benchmark_pass_at_k(records, k);
  t.avg_at_n = avg_at_n(records);
  double esum = 0.0;
  std::size_t ecount = 0;
  for (const auto& r : records) {
    if (!r.entropies) continue;
    for (double e : *r.entropies) {
      esum += e;
      ++ecount;
    }
  }
  t.mean_entropy = ecount ? esum / static_cast<double>(ecount) : 0.0;
  return t;
}

std::string metrics_csv_header() {
  return "step,kind_counts,mean_acc_original,mean_acc_synthetic,synthesis_positive_rate,"
         "entropy,objective,clip_fraction,kl";
}

std::string metrics_csv_row(const StepMetrics& m) {
  std::ostringstream os;
  os << m.step << ",OriginalSolve=" << m.kind_counts.original_solve
     << ";Synthesis=" << m.kind_counts.synthesis
     << ";SyntheticSolve=" << m.kind_counts.synthetic_solve << ','
     << format_real(m.mean_acc_original) << ',' << format_real(m.mean_acc_synthetic) << ','
     << format_real(m.synthesis_positive_rate) << ',' << format_real(m.entropy) << ','
     << format_real(m.objective) << ',' << format_real(m.clip_fraction) << ','
     << format_real(m.kl);
  return os.str();
}

void write_metrics_csv(std::ostream& out, const std::vector<StepMetrics>& steps) {
  out << metrics_csv_header() << '\n';
  for (const auto& m : steps) out << metrics_csv_row(m) << '\n';
}

nlohmann::ordered_json summary_json(const std::vector<RunSummary>& runs) {
  nlohmann::ordered_json modes = nlohmann::ordered_json::object();
  for (const auto& run : runs) {
    nlohmann::ordered_json j;
    j["complete"] = run.complete;
    if (!run.error.empty()) j["error"] = run.error;
    j["export_only"] = run.export_only;
    j["steps"] = run.steps.size();
    j["entropy_estimator"] = run.entropy_estimator;
    j["initial_entropy"] = initial_entropy(run);
    j["final_entropy"] = final_entropy(run);
    nlohmann::ordered_json evals = nlohmann::ordered_json::array();
    for (const auto& t : run.evals) {
      nlohmann::ordered_json e;
      e["step"] = t.step;
      e["n"] = t.n;
      nlohmann::ordered_json pk = nlohmann::ordered_json::object();
      for (const auto& [k, v] : t.pass_at_k) pk["pass@" + std::to_string(k)] = v;
      e["pass_at_k"] = std::move(pk);
      e["avg_at_n"] = t.avg_at_n;
      e["mean_entropy"] = t.mean_entropy;
      evals.push_back(std::move(e));
    }
    j["evals"] = std::move(evals);
    modes[run.mode] = std::move(j);
  }
  return nlohmann::ordered_json{{"modes", std::move(modes)}};
}

void write_report(const std::string& dir, const std::vector<RunSummary>& runs) {
  std::filesystem::create_directories(dir);
  for (const auto& run : runs) {
    const auto path = std::filesystem::path(dir) / (run.mode + ".metrics.csv");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_metrics_csv(out, run.steps);
  }
  const auto path = std::filesystem::path(dir) / "summary.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << summary_json(runs).dump(2) << '\n';
}

}  // namespace svs::eval
