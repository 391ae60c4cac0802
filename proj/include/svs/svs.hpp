#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "svs/backend.hpp"
#include "svs/core.hpp"
#include "svs/evalkit.hpp"

/// One training step of the self-play loop:
///
///   solve       G rollouts per sampled problem, rewarded by the verifier
///   filter      keep groups with 0 < accuracy < 1 (first batch_problems)
///   select      under-performing groups, acc_lo < accuracy < acc_hi
///   synthesize  G_v variant problems from every correct solution of a
///               selected group, each solved G times against the parent's
///               gold answer
///   shape       a synthesis completion earns 1 when its variant's accuracy
///               lies in [synth_acc_lo, synth_acc_hi]
///   assemble    original group, then per solution the kept variant groups
///               followed by the synthesis group
namespace svs {

std::string build_solve_prompt(const Problem& problem);
/// Variant-synthesis prompt with `solution_text` inside <response> tags.
/// Throws InvalidInput for blank text.
std::string build_synthesis_prompt(std::string_view solution_text);
/// Trimmed contents of the last complete ```text fence.
std::optional<std::string> extract_synthetic_problem(std::string_view completion);

enum class Mode { Svs, RlvrBaseline };
std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view s);

struct StepPlan {
  int step_index = 0;
  std::vector<std::string> sampled_problems;
  const RunConfig* config = nullptr;
};

/// Oversampled problem ids for one step: ceil(oversample * batch_problems)
/// drawn without replacement (capped at the dataset size).
StepPlan plan_step(const std::vector<Problem>& dataset, const RunConfig& config,
                   int step_index);

struct Variant {
  std::optional<Problem> problem;  // absent when extraction failed
  bool extraction_failed = false;
  // Index of an earlier identical variant of the same candidate; its
  // accuracy is copied and it is not solved again.
  std::optional<std::size_t> duplicate_of;
  std::optional<RewardedGroup> solve_group;
  double accuracy = 0.0;
};

struct SynthesisCandidate {
  Problem parent;
  Rollout source_solution;
  std::size_t solution_index = 0;
  std::string synthesis_prompt;
  std::vector<Rollout> completions;  // G_v synthesis completions
  std::vector<Variant> variants;     // aligned with completions

  std::vector<double> variant_accuracies() const;
};

/// Reward of one rollout: verifier correctness, 0 when truncated.
double rollout_reward(const Rollout& rollout, const std::string& gold);

std::vector<RewardedGroup> solve_phase(const std::vector<Problem>& problems,
                                       Backend& backend, const RunConfig& config,
                                       int step_index = 0,
                                       std::string_view phase = "solve");
std::vector<RewardedGroup> filter_trainable(const std::vector<RewardedGroup>& groups);
std::vector<RewardedGroup> select_underperforming(const std::vector<RewardedGroup>& groups,
                                                  const RunConfig& config);

/// Candidates (without completions) for every correct solution of `group`.
std::vector<SynthesisCandidate> make_candidates(const Problem& parent,
                                                const RewardedGroup& group);

std::vector<SynthesisCandidate> synthesis_phase(std::vector<SynthesisCandidate> candidates,
                                                Backend& backend, const RunConfig& config,
                                                int step_index = 0);
/// Indices of variants with 0 < accuracy < 1 that own a solve group.
std::vector<std::size_t> keep_trainable_variants(const SynthesisCandidate& candidate);
std::vector<double> shape_synthesis_rewards(const SynthesisCandidate& candidate,
                                            const RunConfig& config);

std::vector<ExperienceSample> group_samples(const RewardedGroup& group, SampleKind kind,
                                            const RunConfig& config);

struct StepResult {
  std::vector<ExperienceSample> samples;
  eval::StepMetrics metrics;
  std::vector<RewardedGroup> original_groups;
  std::vector<SynthesisCandidate> candidates;
};

/// Token entropy of a rollout: exact when available, else -mean logprob.
double rollout_entropy(const Rollout& rollout);

StepResult run_step(const StepPlan& plan, const std::vector<Problem>& dataset,
                    Backend& backend, const RunConfig& config, Mode mode = Mode::Svs);

/// n rollouts per problem, counted correct by the verifier.
std::vector<eval::EvalRecord> collect_eval_records(const std::vector<Problem>& problems,
                                                   Backend& backend,
                                                   const RunConfig& config, int n,
                                                   std::string_view label);

struct TrainingHooks {
  /// Held-out problems evaluated every eval_every steps and at the end.
  std::vector<Problem> heldout;
  /// Called with every drained batch (export in HTTP mode, snapshots).
  std::function<void(int step, const std::vector<ExperienceSample>&)> on_batch;
  std::function<void(const eval::StepMetrics&)> on_step;
};

eval::RunSummary run_training(const std::vector<Problem>& dataset, Backend& backend,
                              const RunConfig& config, Mode mode,
                              const TrainingHooks& hooks = {});

}  // namespace svs
