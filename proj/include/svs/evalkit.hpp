#pragma once

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "svs/core.hpp"

namespace svs::eval {

struct EvalRecord {
  std::string problem_id;
  int n = 1;
  int c = 0;
  std::optional<std::vector<double>> entropies;

  void validate() const;
};

/// Unbiased pass@k: 1 - C(n-c, k) / C(n, k), via the product form.
/// Throws InvalidInput unless 1 <= k <= n and 0 <= c <= n.
double pass_at_k(int n, int c, int k);
/// Same estimator in exact rational arithmetic.
boost::multiprecision::cpp_rational pass_at_k_exact(int n, int c, int k);

/// Mean of c/n over records (0 for no records).
double avg_at_n(const std::vector<EvalRecord>& records);
/// Mean of pass_at_k over records. Names the first record with n < k.
double benchmark_pass_at_k(const std::vector<EvalRecord>& records, int k);

/// One record per line: {"problem_id":…, "n":…, "c":…, "entropies":[…]?}
std::vector<EvalRecord> read_eval_records_jsonl(std::istream& in);
void write_eval_records_jsonl(std::ostream& out, const std::vector<EvalRecord>& records);

// ---------------------------------------------------------------------------
// Run reports
// ---------------------------------------------------------------------------

struct KindCounts {
  int original_solve = 0;
  int synthesis = 0;
  int synthetic_solve = 0;

  int total() const { return original_solve + synthesis + synthetic_solve; }
  static KindCounts of(const std::vector<ExperienceSample>& samples);
};

struct StepMetrics {
  int step = 0;
  KindCounts kind_counts;
  double mean_acc_original = 0.0;
  double mean_acc_synthetic = 0.0;
  double synthesis_positive_rate = 0.0;
  double entropy = 0.0;
  double objective = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
  bool empty = false;  // no trainable samples this step
};

struct PassAtKTable {
  int step = 0;  // checkpoint: number of completed updates
  int n = 0;
  std::map<int, double> pass_at_k;
  double avg_at_n = 0.0;
  double mean_entropy = 0.0;
};

struct RunSummary {
  std::string mode;
  std::vector<StepMetrics> steps;
  std::vector<PassAtKTable> evals;
  bool complete = true;
  std::string error;
  std::string entropy_estimator;  // "exact" or "neg_mean_logprob"
  bool export_only = false;
};

/// Entropy of the first step and mean over the last `window` steps.
double initial_entropy(const RunSummary& run);
double final_entropy(const RunSummary& run, int window = 10);

PassAtKTable pass_at_k_table(const std::vector<EvalRecord>& records,
                             const std::vector<int>& ks, int step = 0);

std::string metrics_csv_header();
std::string metrics_csv_row(const StepMetrics& m);
void write_metrics_csv(std::ostream& out, const std::vector<StepMetrics>& steps);

nlohmann::ordered_json summary_json(const std::vector<RunSummary>& runs);

/// Writes <dir>/<mode>.metrics.csv for every run and <dir>/summary.json.
void write_report(const std::string& dir, const std::vector<RunSummary>& runs);

}  // namespace svs::eval
