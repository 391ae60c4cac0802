#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace svs {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Precondition violated by the caller.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A generation backend could not deliver completions. Carries the id of the
/// problem being processed when the failure happened (empty if unknown).
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, std::string problem_id = {})
      : std::runtime_error(what), problem_id_(std::move(problem_id)) {}
  const std::string& problem_id() const { return problem_id_; }

 private:
  std::string problem_id_;
};

/// Scripted backend ran out of recorded completions for a prompt.
class FixtureExhausted : public TransportError {
 public:
  using TransportError::TransportError;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class Origin { Dataset, Synthetic };

struct Problem {
  std::string id;
  std::string statement;
  std::string gold_answer;
  Origin origin = Origin::Dataset;
  std::optional<std::string> parent_id;

  static Problem original(std::string id, std::string statement,
                          std::string gold);
  /// Variant derived from `parent`; inherits the parent's gold answer.
  static Problem variant_of(const Problem& parent, std::string id,
                            std::string statement);

  /// Throws InvalidInput if the origin/parent/gold invariants do not hold.
  void validate() const;
};

enum class FinishReason { Stop, Length };

struct Rollout {
  std::string text;
  std::vector<double> token_logprobs;  // nats, one per generated token
  FinishReason finish_reason = FinishReason::Stop;
  // Exact per-token entropies when the backend knows its distributions.
  std::vector<double> token_entropies;

  void validate() const;
};

struct RewardedGroup {
  std::string problem_id;
  std::string prompt;
  std::vector<Rollout> rollouts;
  std::vector<double> rewards;
  double group_accuracy = 0.0;
  std::optional<std::vector<double>> advantages;

  /// Builds the group, sets accuracy to mean(rewards) and fills advantages
  /// (left empty when rewards are constant).
  static RewardedGroup make(std::string problem_id, std::string prompt,
                            std::vector<Rollout> rollouts,
                            std::vector<double> rewards);
};

enum class SampleKind { OriginalSolve, Synthesis, SyntheticSolve };

std::string_view to_string(SampleKind kind);
SampleKind sample_kind_from_string(std::string_view s);
std::string_view to_string(FinishReason reason);
FinishReason finish_reason_from_string(std::string_view s);

struct ExperienceSample {
  SampleKind kind = SampleKind::OriginalSolve;
  std::string prompt;
  std::string response;
  double reward = 0.0;
  double advantage = 0.0;
  std::vector<double> token_logprobs_old;
  std::string problem_id;

  bool operator==(const ExperienceSample&) const = default;
};

enum class LossMode { TokenMean, SequenceMean };

struct RunConfig {
  int G = 8;
  int G_v = 8;
  double acc_lo = 0.125;
  double acc_hi = 0.50;
  double synth_acc_lo = 0.125;
  double synth_acc_hi = 0.625;
  double eps_lo = 0.2;
  double eps_hi = 0.28;
  double beta = 0.0;
  double temperature = 1.0;
  double top_p = 1.0;
  int batch_problems = 16;
  int max_steps = 300;
  std::uint64_t seed = 0;
  int max_tokens = 1024;

  // Dynamic Sampling: sample ceil(oversample * batch_problems) problems and
  // keep the first batch_problems trainable groups.
  double oversample = 2.0;
  bool strict_underperforming = true;
  LossMode loss_mode = LossMode::TokenMean;
  bool mask_truncated = false;
  int parallelism = 1;

  // Toy policy optimisation.
  double learning_rate = 2.0;
  int toy_problems = 50;
  int toy_heldout = 50;

  // Periodic held-out evaluation (0 disables).
  int eval_every = 0;
  int eval_n = 32;
  std::vector<int> eval_k = {1, 8};

  bool snapshot_buffer = false;

  // Remote backend.
  std::string base_url = "http://127.0.0.1:8000";
  std::string model = "policy";
  std::string api_key_env = "SVS_API_KEY";
  double timeout_s = 120.0;
  int retries = 3;
  int retry_backoff_ms = 500;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Experience buffer
// ---------------------------------------------------------------------------

/// Per-step collection of samples. Single owner, handed off between phases.
class ExperienceBuffer {
 public:
  void add(std::vector<ExperienceSample> samples);
  std::vector<ExperienceSample> drain();
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const std::vector<ExperienceSample>& peek() const { return samples_; }

 private:
  std::vector<ExperienceSample> samples_;
};

/// Group index per sample: consecutive samples sharing kind and prompt form
/// one group.
std::vector<int> group_ids(const std::vector<ExperienceSample>& samples);

void buffer_add(ExperienceBuffer& buffer,
                std::vector<ExperienceSample> samples);
std::vector<ExperienceSample> buffer_drain(ExperienceBuffer& buffer);

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

nlohmann::json to_json(const ExperienceSample& s);
ExperienceSample sample_from_json(const nlohmann::json& j);

/// One sample per line, fixed field order. Reals round-trip exactly.
std::string to_jsonl_line(const ExperienceSample& s);
void write_jsonl(std::ostream& out, const std::vector<ExperienceSample>& samples);
std::vector<ExperienceSample> read_samples_jsonl(std::istream& in);

nlohmann::json to_json(const Rollout& r);
Rollout rollout_from_json(const nlohmann::json& j);

/// Dataset lines: {"id":…, "problem":…, "answer":…}
std::vector<Problem> read_dataset_jsonl(std::istream& in);
void write_dataset_jsonl(std::ostream& out, const std::vector<Problem>& problems);

/// Shortest rendering of a double that parses back to the same value.
std::string format_real(double v);

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view s);
std::uint64_t splitmix64(std::uint64_t x);
/// Subsystem seed derived from the run seed by labeled hashing.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

/// Uniform double in [0,1) from a 64-bit draw; identical on every platform.
inline double unit_from_bits(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace svs
