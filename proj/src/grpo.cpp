#include "svs/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace svs::grpo {

std::optional<std::vector<double>> group_advantages(
    std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw InvalidInput("group_advantages needs at least two rewards");
  }
  if (std::all_of(rewards.begin(), rewards.end(),
                  [&](double r) { return r == rewards.front(); })) {
    return std::nullopt;
  }
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double sd = std::sqrt(var);
  if (!(sd > 0.0)) return std::nullopt;
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / sd);
  return out;
}

std::vector<double> importance_ratios(std::span<const double> old_logprobs,
                                      std::span<const double> new_logprobs) {
  if (old_logprobs.size() != new_logprobs.size()) {
    throw InvalidInput("importance_ratios: length mismatch");
  }
  std::vector<double> out(old_logprobs.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t] = std::exp(new_logprobs[t] - old_logprobs[t]);
  }
  return out;
}

std::size_t TokenBatch::token_count() const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.logprobs_new.size();
  return n;
}

void TokenBatch::validate(bool need_ref) const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.logprobs_old.size() != s.logprobs_new.size()) {
      throw InvalidInput("sample " + std::to_string(i) +
                         ": old/new logprob lengths differ");
    }
    if (need_ref && s.logprobs_ref.size() != s.logprobs_new.size()) {
      throw InvalidInput("sample " + std::to_string(i) +
                         ": reference logprobs missing or mismatched");
    }
    auto positive = [](double v) { return v > 0.0; };
    if (std::any_of(s.logprobs_old.begin(), s.logprobs_old.end(), positive) ||
        std::any_of(s.logprobs_new.begin(), s.logprobs_new.end(), positive)) {
      throw InvalidInput("sample " + std::to_string(i) +
                         ": logprobs must be <= 0");
    }
  }
}

namespace {

// Per-token weight w such that objective = sum_t w_t * term_t.
std::vector<std::vector<double>> token_weights(const TokenBatch& batch,
                                               LossMode mode) {
  std::vector<std::vector<double>> w(batch.samples.size());
  if (mode == LossMode::TokenMean) {
    const auto total = static_cast<double>(batch.token_count());
    for (std::size_t i = 0; i < batch.samples.size(); ++i) {
      w[i].assign(batch.samples[i].logprobs_new.size(),
                  total > 0 ? 1.0 / total : 0.0);
    }
    return w;
  }
  // SequenceMean: 1/|groups| * 1/|group| * 1/|y_i|. Empty sequences carry no
  // tokens and are excluded from their group's size.
  std::map<int, int> group_sizes;
  for (const auto& s : batch.samples) {
    if (!s.logprobs_new.empty()) ++group_sizes[s.group];
  }
  const auto groups = static_cast<double>(group_sizes.size());
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    const auto& s = batch.samples[i];
    if (s.logprobs_new.empty()) continue;
    const double wi = 1.0 / (groups * group_sizes[s.group] *
                             static_cast<double>(s.logprobs_new.size()));
    w[i].assign(s.logprobs_new.size(), wi);
  }
  return w;
}

}  // namespace

ObjectiveReport clipped_objective(const TokenBatch& batch,
                                  const ObjectiveParams& params) {
  if (!(params.eps_lo > 0.0) || !(params.eps_hi > 0.0)) {
    throw InvalidInput("clip bounds must be positive");
  }
  const bool use_kl = params.beta > 0.0;
  batch.validate(use_kl);

  const auto weights = token_weights(batch, params.mode);
  ObjectiveReport rep;
  long clipped = 0;
  double surrogate = 0.0;
  double kl = 0.0;
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    const auto& s = batch.samples[i];
    for (std::size_t t = 0; t < s.logprobs_new.size(); ++t) {
      const double k = std::exp(s.logprobs_new[t] - s.logprobs_old[t]);
      const double unclipped = k * s.advantage;
      const double kc =
          std::clamp(k, 1.0 - params.eps_lo, 1.0 + params.eps_hi);
      const double clipped_term = kc * s.advantage;
      if (clipped_term < unclipped) ++clipped;
      surrogate += weights[i][t] * std::min(unclipped, clipped_term);
      if (use_kl) {
        const double log_ratio_ref = s.logprobs_ref[t] - s.logprobs_new[t];
        kl += weights[i][t] * (std::exp(log_ratio_ref) - 1.0 - log_ratio_ref);
      }
      ++rep.token_count;
    }
  }
  rep.kl_value = use_kl ? kl : 0.0;
  rep.objective_value = surrogate - params.beta * rep.kl_value;
  rep.clip_fraction =
      rep.token_count > 0 ? static_cast<double>(clipped) / rep.token_count : 0.0;
  return rep;
}

std::vector<std::vector<double>> objective_logprob_gradient(
    const TokenBatch& batch, const ObjectiveParams& params) {
  const bool use_kl = params.beta > 0.0;
  batch.validate(use_kl);
  const auto weights = token_weights(batch, params.mode);
  std::vector<std::vector<double>> grad(batch.samples.size());
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    const auto& s = batch.samples[i];
    grad[i].assign(s.logprobs_new.size(), 0.0);
    for (std::size_t t = 0; t < s.logprobs_new.size(); ++t) {
      const double k = std::exp(s.logprobs_new[t] - s.logprobs_old[t]);
      const double unclipped = k * s.advantage;
      const double kc =
          std::clamp(k, 1.0 - params.eps_lo, 1.0 + params.eps_hi);
      double g = 0.0;
      // The clipped branch is constant in theta; only the unclipped branch
      // carries gradient when it is the active minimum.
      if (!(kc * s.advantage < unclipped)) g = unclipped;
      if (use_kl) {
        // d/dnew of -(r - 1 - log r), r = exp(ref - new)
        g += params.beta *
             (std::exp(s.logprobs_ref[t] - s.logprobs_new[t]) - 1.0);
      }
      grad[i][t] = weights[i][t] * g;
    }
  }
  return grad;
}

double entropy_of(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double policy_entropy(std::span<const std::vector<double>> distributions) {
  if (distributions.empty()) return 0.0;
  double total = 0.0;
  for (const auto& d : distributions) {
    double sum = 0.0;
    for (double v : d) {
      if (v < 0.0) throw InvalidInput("negative probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw InvalidInput("distribution does not sum to 1");
    }
    total += entropy_of(d);
  }
  return total / static_cast<double>(distributions.size());
}

}  // namespace svs::grpo
