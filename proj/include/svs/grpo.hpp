#pragma once

#include <optional>
#include <span>
#include <vector>

#include "svs/core.hpp"

/// Policy-optimisation mathematics: group-relative advantages, the clipped
/// token-level surrogate with optional KL penalty, and entropy measurement.
namespace svs::grpo {

/// Group-normalised advantages (r - mean) / std with population std.
/// Returns nullopt when every reward is equal. Throws InvalidInput for
/// fewer than two rewards.
std::optional<std::vector<double>> group_advantages(std::span<const double> rewards);

/// exp(new - old) elementwise.
std::vector<double> importance_ratios(std::span<const double> old_logprobs,
                                      std::span<const double> new_logprobs);

struct TokenSample {
  double advantage = 0.0;
  std::vector<double> logprobs_old;
  std::vector<double> logprobs_new;
  // Required when beta > 0.
  std::vector<double> logprobs_ref;
  // Samples sharing a group id are averaged together in SequenceMean mode.
  int group = 0;
};

struct TokenBatch {
  std::vector<TokenSample> samples;

  std::size_t token_count() const;
  /// Throws InvalidInput on length mismatch or positive logprobs.
  void validate(bool need_ref) const;
};

struct ObjectiveReport {
  double objective_value = 0.0;
  double clip_fraction = 0.0;
  double kl_value = 0.0;
  long token_count = 0;
};

struct ObjectiveParams {
  double eps_lo = 0.2;
  double eps_hi = 0.28;
  double beta = 0.0;
  LossMode mode = LossMode::TokenMean;
};

/// Mean over tokens of min(k*A, clip(k, 1-eps_lo, 1+eps_hi)*A) minus
/// beta times the k3 KL estimate against the reference logprobs.
///
/// TokenMean weights every token in the batch equally. SequenceMean follows
/// the per-sequence, then per-group, then per-batch averaging of the GRPO
/// objective as originally written.
ObjectiveReport clipped_objective(const TokenBatch& batch,
                                  const ObjectiveParams& params);

/// d objective / d logprob_new for every token, in batch order. This is the
/// only quantity a differentiable policy needs to chain through.
std::vector<std::vector<double>> objective_logprob_gradient(
    const TokenBatch& batch, const ObjectiveParams& params);

/// Mean over steps of -sum p log p. Each distribution must sum to 1 within
/// 1e-6.
double policy_entropy(std::span<const std::vector<double>> distributions);

/// Entropy of a single normalised distribution.
double entropy_of(std::span<const double> p);

}  // namespace svs::grpo
