#include "svs/svs.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <thread>
#include <unordered_map>

#include "svs/verifier.hpp"

namespace svs {

namespace {

constexpr std::string_view kSolveInstruction =
    "Let's think step by step and output the final answer within \\boxed{}.";

constexpr std::string_view kSynthesisHead =
    "As an expert in educational assessment and mathematical problem synthesis, carefully "
    "examine the following model-generated response:\n\n<response>\n";

constexpr std::string_view kSynthesisTail =
    "\n</response>\n\n"
    "The solution is assured to be correct. Your goal is to generate variants for the "
    "original problem that would most plausibly elicit such a response. To achieve this, "
    "carefully follow these steps:\n\n"
    "1. Identify the topic and context indicated by the response.\n"
    "2. Infer the type of reasoning or calculation involved (e.g., numerical calculation, "
    "conceptual explanation, comparison, opinion).\n"
    "3. Determine the most likely educational purpose or learning objective behind the "
    "problem.\n\n"
    "Based on your analysis, write a clear, concise, and natural-sounding original problem "
    "in English that satisfies the following criteria:\n\n"
    "- Precisely aligns with the provided response.\n"
    "- Reflects a realistic problem that could appear in an educational context or "
    "standard curriculum.\n"
    "- Is explicit, measurable, and unambiguous.\n\n"
    "Provide your final synthetic problem formatted strictly as:\n\n"
    "```text\n[Your synthetic problem here]\n```";

std::string_view trim(std::string_view s) {
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (!s.empty() && space(s.front())) s.remove_prefix(1);
  while (!s.empty() && space(s.back())) s.remove_suffix(1);
  return s;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : trim(s)) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending = true;
      continue;
    }
    if (pending && !out.empty()) out += ' ';
    pending = false;
    out += c;
  }
  return out;
}

// Runs fn(i) for i in [0, count) on up to `parallelism` threads. Results are
// indexed by i; the exception of the lowest failing index is rethrown.
template <class T, class Fn>
std::vector<T> fan_out(std::size_t count, int parallelism, Fn fn) {
  std::vector<T> results(count);
  if (count == 0) return results;
  const std::size_t workers =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(parallelism, 1)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) results[i] = fn(i);
    return results;
  }
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          results[i] = fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

std::vector<Rollout> generate_for(Backend& backend, const std::string& prompt, int n,
                                  const RunConfig& config, std::uint64_t seed,
                                  const std::string& problem_id) {
  GenerationRequest req;
  req.prompt = prompt;
  req.n = n;
  req.temperature = config.temperature;
  req.top_p = config.top_p;
  req.max_tokens = config.max_tokens;
  req.seed = seed;
  req.want_logprobs = true;
  try {
    auto rollouts = backend.generate(req);
    if (static_cast<int>(rollouts.size()) != n) {
      throw TransportError("backend returned " + std::to_string(rollouts.size()) +
                               " completions, expected " + std::to_string(n),
                           problem_id);
    }
    return rollouts;
  } catch (const FixtureExhausted& e) {
    throw FixtureExhausted(e.what(), problem_id);
  } catch (const TransportError& e) {
    throw TransportError(e.what(), problem_id);
  }
}

RewardedGroup solve_one(const Problem& problem, Backend& backend, const RunConfig& config,
                        std::uint64_t seed) {
  const std::string prompt = build_solve_prompt(problem);
  auto rollouts = generate_for(backend, prompt, config.G, config, seed, problem.id);
  std::vector<double> rewards;
  rewards.reserve(rollouts.size());
  for (const auto& r : rollouts) rewards.push_back(rollout_reward(r, problem.gold_answer));
  return RewardedGroup::make(problem.id, prompt, std::move(rollouts), std::move(rewards));
}

std::string step_label(int step_index, std::string_view phase, std::string_view rest) {
  return "step/" + std::to_string(step_index) + "/" + std::string(phase) + "/" +
         std::string(rest);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

// ---- prompts ---------------------------------------------------------------

std::string build_solve_prompt(const Problem& problem) {
  return problem.statement + "\n\n" + std::string(kSolveInstruction);
}

std::string build_synthesis_prompt(std::string_view solution_text) {
  if (trim(solution_text).empty()) {
    throw InvalidInput("synthesis prompt needs a non-empty solution");
  }
  std::string out;
  out.reserve(kSynthesisHead.size() + solution_text.size() + kSynthesisTail.size());
  out += kSynthesisHead;
  out += solution_text;
  out += kSynthesisTail;
  return out;
}

std::optional<std::string> extract_synthetic_problem(std::string_view completion) {
  constexpr std::string_view kOpen = "```text";
  std::optional<std::string> last;
  std::size_t pos = 0;
  while ((pos = completion.find(kOpen, pos)) != std::string_view::npos) {
    const std::size_t body = pos + kOpen.size();
    const std::size_t close = completion.find("```", body);
    if (close == std::string_view::npos) break;
    last = std::string(trim(completion.substr(body, close - body)));
    pos = close + 3;
  }
  if (last && last->empty()) return std::nullopt;
  return last;
}

std::string_view to_string(Mode mode) {
  return mode == Mode::Svs ? "svs" : "rlvr_baseline";
}

Mode mode_from_string(std::string_view s) {
  if (s == "svs") return Mode::Svs;
  if (s == "rlvr_baseline" || s == "rlvr-baseline") return Mode::RlvrBaseline;
  throw InvalidInput("unknown mode '" + std::string(s) + "' (expected svs or rlvr-baseline)");
}

// ---- planning --------------------------------------------------------------

StepPlan plan_step(const std::vector<Problem>& dataset, const RunConfig& config,
                   int step_index) {
  if (dataset.empty()) throw InvalidInput("dataset is empty");
  const auto want = static_cast<std::size_t>(
      std::ceil(config.oversample * static_cast<double>(config.batch_problems) - 1e-9));
  const std::size_t count = std::min(want, dataset.size());
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(config.seed, "plan/" + std::to_string(step_index)));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t span = order.size() - i;
    const std::size_t j =
        i + std::min(span - 1, static_cast<std::size_t>(unit_from_bits(rng()) * span));
    std::swap(order[i], order[j]);
  }
  StepPlan plan;
  plan.step_index = step_index;
  plan.config = &config;
  for (std::size_t i = 0; i < count; ++i) plan.sampled_problems.push_back(dataset[order[i]].id);
  return plan;
}

// ---- phases ----------------------------------------------------------------

double rollout_reward(const Rollout& rollout, const std::string& gold) {
  if (rollout.finish_reason == FinishReason::Length) return 0.0;
  return verifier::correctness_reward(rollout.text, gold);
}

std::vector<RewardedGroup> solve_phase(const std::vector<Problem>& problems,
                                       Backend& backend, const RunConfig& config,
                                       int step_index, std::string_view phase) {
  if (problems.empty()) throw InvalidInput("solve_phase: no problems");
  return fan_out<RewardedGroup>(problems.size(), config.parallelism, [&](std::size_t i) {
    const auto seed = derive_seed(config.seed, step_label(step_index, phase, problems[i].id));
    return solve_one(problems[i], backend, config, seed);
  });
}

std::vector<RewardedGroup> filter_trainable(const std::vector<RewardedGroup>& groups) {
  std::vector<RewardedGroup> out;
  for (const auto& g : groups) {
    if (g.group_accuracy > 0.0 && g.group_accuracy < 1.0) out.push_back(g);
  }
  return out;
}

std::vector<RewardedGroup> select_underperforming(const std::vector<RewardedGroup>& groups,
                                                  const RunConfig& config) {
  std::vector<RewardedGroup> out;
  for (const auto& g : groups) {
    const double a = g.group_accuracy;
    const bool inside = config.strict_underperforming
                            ? (config.acc_lo < a && a < config.acc_hi)
                            : (config.acc_lo <= a && a <= config.acc_hi);
    if (inside) out.push_back(g);
  }
  return out;
}

std::vector<double> SynthesisCandidate::variant_accuracies() const {
  std::vector<double> out;
  out.reserve(variants.size());
  for (const auto& v : variants) out.push_back(v.accuracy);
  return out;
}

std::vector<SynthesisCandidate> make_candidates(const Problem& parent,
                                                const RewardedGroup& group) {
  std::vector<SynthesisCandidate> out;
  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    if (group.rewards[i] != 1.0) continue;
    SynthesisCandidate c;
    c.parent = parent;
    c.source_solution = group.rollouts[i];
    c.solution_index = i;
    c.synthesis_prompt = build_synthesis_prompt(group.rollouts[i].text);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<SynthesisCandidate> synthesis_phase(std::vector<SynthesisCandidate> candidates,
                                                Backend& backend, const RunConfig& config,
                                                int step_index) {
  auto tag = [&](const SynthesisCandidate& c) {
    return c.parent.id + "/" + std::to_string(c.solution_index);
  };

  // Sample G_v synthesis completions per candidate.
  auto completions = fan_out<std::vector<Rollout>>(
      candidates.size(), config.parallelism, [&](std::size_t i) {
        auto& c = candidates[i];
        if (c.synthesis_prompt.empty()) {
          c.synthesis_prompt = build_synthesis_prompt(c.source_solution.text);
        }
        const auto seed = derive_seed(config.seed, step_label(step_index, "synth", tag(c)));
        return generate_for(backend, c.synthesis_prompt, config.G_v, config, seed, c.parent.id);
      });

  // Extract and deduplicate; collect the unique variants to solve.
  struct Job {
    std::size_t candidate;
    std::size_t variant;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& c = candidates[i];
    c.completions = std::move(completions[i]);
    c.variants.assign(c.completions.size(), Variant{});
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t j = 0; j < c.completions.size(); ++j) {
      auto& v = c.variants[j];
      const auto& completion = c.completions[j];
      std::optional<std::string> statement;
      if (completion.finish_reason != FinishReason::Length) {
        statement = extract_synthetic_problem(completion.text);
      }
      if (!statement) {
        v.extraction_failed = true;
        continue;
      }
      const std::string id = c.parent.id + "~s" + std::to_string(step_index) + "." +
                             std::to_string(c.solution_index) + "." + std::to_string(j);
      v.problem = Problem::variant_of(c.parent, id, *statement);
      auto [it, inserted] = seen.emplace(collapse_whitespace(*statement), j);
      if (!inserted) {
        v.duplicate_of = it->second;
      } else {
        jobs.push_back({i, j});
      }
    }
  }

  auto groups = fan_out<RewardedGroup>(jobs.size(), config.parallelism, [&](std::size_t k) {
    const auto& v = candidates[jobs[k].candidate].variants[jobs[k].variant];
    const auto seed = derive_seed(config.seed, step_label(step_index, "vsolve", v.problem->id));
    return solve_one(*v.problem, backend, config, seed);
  });
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    auto& v = candidates[jobs[k].candidate].variants[jobs[k].variant];
    v.accuracy = groups[k].group_accuracy;
    v.solve_group = std::move(groups[k]);
  }
  for (auto& c : candidates) {
    for (auto& v : c.variants) {
      if (v.duplicate_of) v.accuracy = c.variants[*v.duplicate_of].accuracy;
    }
  }
  return candidates;
}

std::vector<std::size_t> keep_trainable_variants(const SynthesisCandidate& candidate) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < candidate.variants.size(); ++j) {
    const auto& v = candidate.variants[j];
    if (v.extraction_failed || !v.solve_group) continue;
    if (v.accuracy > 0.0 && v.accuracy < 1.0) out.push_back(j);
  }
  return out;
}

std::vector<double> shape_synthesis_rewards(const SynthesisCandidate& candidate,
                                            const RunConfig& config) {
  std::vector<double> rewards;
  rewards.reserve(candidate.variants.size());
  for (const auto& v : candidate.variants) {
    const bool in_band = !v.extraction_failed && config.synth_acc_lo <= v.accuracy &&
                         v.accuracy <= config.synth_acc_hi;
    rewards.push_back(in_band ? 1.0 : 0.0);
  }
  return rewards;
}

std::vector<ExperienceSample> group_samples(const RewardedGroup& group, SampleKind kind,
                                            const RunConfig& config) {
  std::vector<ExperienceSample> out;
  if (!group.advantages) return out;
  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    const auto& r = group.rollouts[i];
    if (config.mask_truncated && r.finish_reason == FinishReason::Length) continue;
    ExperienceSample s;
    s.kind = kind;
    s.prompt = group.prompt;
    s.response = r.text;
    s.reward = group.rewards[i];
    s.advantage = (*group.advantages)[i];
    s.token_logprobs_old = r.token_logprobs;
    s.problem_id = group.problem_id;
    out.push_back(std::move(s));
  }
  return out;
}

double rollout_entropy(const Rollout& rollout) {
  if (!rollout.token_entropies.empty()) return mean(rollout.token_entropies);
  if (rollout.token_logprobs.empty()) return 0.0;
  return -mean(rollout.token_logprobs);
}

// ---- step ------------------------------------------------------------------

StepResult run_step(const StepPlan& plan, const std::vector<Problem>& dataset,
                    Backend& backend, const RunConfig& config, Mode mode) {
  std::unordered_map<std::string, const Problem*> by_id;
  for (const auto& p : dataset) by_id.emplace(p.id, &p);
  std::vector<Problem> problems;
  for (const auto& id : plan.sampled_problems) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw InvalidInput("plan names unknown problem '" + id + "'");
    problems.push_back(*it->second);
  }

  StepResult result;
  auto& m = result.metrics;
  m.step = plan.step_index;

  auto solved = solve_phase(problems, backend, config, plan.step_index);
  {
    std::vector<double> accs;
    double esum = 0.0, tokens = 0.0;
    for (const auto& g : solved) {
      accs.push_back(g.group_accuracy);
      for (const auto& r : g.rollouts) {
        const double n = static_cast<double>(
            std::max(r.token_entropies.size(), r.token_logprobs.size()));
        esum += rollout_entropy(r) * n;
        tokens += n;
      }
    }
    m.mean_acc_original = mean(accs);
    m.entropy = tokens > 0.0 ? esum / tokens : 0.0;
  }

  auto trainable = filter_trainable(solved);
  if (static_cast<int>(trainable.size()) > config.batch_problems) {
    trainable.resize(static_cast<std::size_t>(config.batch_problems));
  }
  result.original_groups = trainable;

  ExperienceBuffer buffer;
  std::vector<double> synth_accs;
  long synth_total = 0, synth_positive = 0;

  for (const auto& group : trainable) {
    buffer_add(buffer, group_samples(group, SampleKind::OriginalSolve, config));
    if (mode != Mode::Svs) continue;
    if (select_underperforming({group}, config).empty()) continue;

    const Problem& parent = *by_id.at(group.problem_id);
    auto candidates =
        synthesis_phase(make_candidates(parent, group), backend, config, plan.step_index);
    for (auto& c : candidates) {
      for (const auto& v : c.variants) {
        if (v.solve_group) synth_accs.push_back(v.accuracy);
      }
      for (std::size_t j : keep_trainable_variants(c)) {
        buffer_add(buffer,
                   group_samples(*c.variants[j].solve_group, SampleKind::SyntheticSolve, config));
      }
      const auto rewards = shape_synthesis_rewards(c, config);
      synth_total += static_cast<long>(rewards.size());
      const auto positives = std::count(rewards.begin(), rewards.end(), 1.0);
      synth_positive += positives;
      if (positives > 0 && positives < static_cast<long>(rewards.size())) {
        auto g = RewardedGroup::make(parent.id, c.synthesis_prompt, c.completions, rewards);
        buffer_add(buffer, group_samples(g, SampleKind::Synthesis, config));
      }
      result.candidates.push_back(std::move(c));
    }
  }

  result.samples = buffer_drain(buffer);
  m.kind_counts = eval::KindCounts::of(result.samples);
  m.mean_acc_synthetic = mean(synth_accs);
  m.synthesis_positive_rate =
      synth_total ? static_cast<double>(synth_positive) / static_cast<double>(synth_total) : 0.0;
  m.empty = result.samples.empty();
  return result;
}

// ---- evaluation and training -----------------------------------------------

std::vector<eval::EvalRecord> collect_eval_records(const std::vector<Problem>& problems,
                                                   Backend& backend,
                                                   const RunConfig& config, int n,
                                                   std::string_view label) {
  return fan_out<eval::EvalRecord>(problems.size(), config.parallelism, [&](std::size_t i) {
    const auto& p = problems[i];
    const auto seed = derive_seed(config.seed, std::string(label) + "/" + p.id);
    const auto rollouts = generate_for(backend, build_solve_prompt(p), n, config, seed, p.id);
    eval::EvalRecord rec;
    rec.problem_id = p.id;
    rec.n = n;
    std::vector<double> entropies;
    for (const auto& r : rollouts) {
      if (rollout_reward(r, p.gold_answer) == 1.0) ++rec.c;
      entropies.push_back(rollout_entropy(r));
    }
    rec.entropies = std::move(entropies);
    return rec;
  });
}

eval::RunSummary run_training(const std::vector<Problem>& dataset, Backend& backend,
                              const RunConfig& config, Mode mode, const TrainingHooks& hooks) {
  config.validate();
  if (dataset.empty()) throw InvalidInput("dataset is empty");
  eval::RunSummary summary;
  summary.mode = std::string(to_string(mode));
  summary.entropy_estimator = backend.exact_entropy() ? "exact" : "neg_mean_logprob";

  auto evaluate = [&](int step) {
    if (hooks.heldout.empty()) return;
    auto records = collect_eval_records(hooks.heldout, backend, config, config.eval_n,
                                        "eval/" + std::to_string(step));
    summary.evals.push_back(eval::pass_at_k_table(records, config.eval_k, step));
  };

  try {
    for (int step = 1; step <= config.max_steps; ++step) {
      if (config.eval_every > 0 && (step - 1) % config.eval_every == 0) evaluate(step - 1);
      const auto plan = plan_step(dataset, config, step);
      auto result = run_step(plan, dataset, backend, config, mode);
      if (hooks.on_batch) hooks.on_batch(step, result.samples);
      if (!result.samples.empty()) {
        if (auto report = backend.update(result.samples, config)) {
          result.metrics.objective = report->objective_value;
          result.metrics.clip_fraction = report->clip_fraction;
          result.metrics.kl = report->kl_value;
        } else {
          summary.export_only = true;
        }
      }
      if (!backend.has_logprobs()) summary.export_only = true;
      if (hooks.on_step) hooks.on_step(result.metrics);
      summary.steps.push_back(result.metrics);
    }
    if (config.max_steps > 0) evaluate(config.max_steps);
  } catch (const TransportError& e) {
    summary.complete = false;
    summary.error = e.problem_id().empty()
                        ? std::string(e.what())
                        : std::string(e.what()) + " (problem " + e.problem_id() + ")";
  }
  return summary;
}

}  // namespace svs
