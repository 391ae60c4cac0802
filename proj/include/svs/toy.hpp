#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "svs/backend.hpp"
#include "svs/core.hpp"
#include "svs/grpo.hpp"

/// Desk-scale stand-in for an LLM policy.
///
/// Toy problems are "Compute (a o b) o c" over +, -, * with operands 1..9.
/// The same tabular softmax policy both solves and synthesizes:
///
///   solving     a 5-token left-to-right program over the statement's three
///               numbers, e.g. `a * b + c`, or the single token `h` that copies
///               a hint from the statement. The program is executed and the
///               result is boxed.
///   synthesis   a 5-token description of a new statement built from the
///               numbers and operators of a correct solution: shape (`L` for
///               "(x o y) o z", `R` for "x o (y o z)"), three number references
///               and a hint flag (`!` appends "Hint: the answer is N.").
///
/// Solving states see the statement's shape, its outer operator, whether a
/// hint is present, the position and the previous token. The inner operator
/// is not part of the solving state, so one state covers several templates
/// and the policy has to keep a mixture to solve all of them.
namespace svs::toy {

inline constexpr std::string_view kVocabularyVersion = "toy-v1";

enum class Tok : std::uint8_t {
  A, B, C, Copy, Plus, Minus, Times, ShapeL, ShapeR, Hint, Plain
};
inline constexpr int kVocab = 11;

std::string_view spelling(Tok t);
std::optional<Tok> parse_token(std::string_view s);

enum class Op : std::uint8_t { Plus, Minus, Times };
char op_char(Op op);
long apply(Op op, long x, long y);

// ---------------------------------------------------------------------------
// Domain
// ---------------------------------------------------------------------------

struct ToyProblem {
  int template_id = 0;  // index into templates()
  std::array<int, 3> operands{};
  std::string statement;
  long gold = 0;

  Problem to_problem(const std::string& id) const;
};

/// (inner, outer) operator pairs. Every template keeps |answer| <= 81 + 9.
std::span<const std::pair<Op, Op>> templates();

std::string render_statement(Op inner, Op outer, std::array<int, 3> x);
ToyProblem make_problem(int template_id, std::array<int, 3> operands);
std::vector<ToyProblem> toy_domain_generate(std::uint64_t seed, int count);
std::vector<Problem> toy_dataset(std::uint64_t seed, int count,
                                 const std::string& id_prefix);
/// Training and held-out sets for a run, both derived from config.seed.
std::vector<Problem> toy_training_set(const RunConfig& config);
std::vector<Problem> toy_heldout_set(const RunConfig& config);

// ---------------------------------------------------------------------------
// Prompt views
// ---------------------------------------------------------------------------

enum class Shape : std::uint8_t { L, R, Unknown };

struct SolveView {
  Shape shape = Shape::Unknown;
  Op outer = Op::Plus;
  std::array<long, 3> numbers{};
  std::optional<long> hint;
};

struct SynthView {
  bool parsed = false;
  Op inner = Op::Plus;
  Op outer = Op::Plus;
  std::array<long, 3> numbers{};
  long value = 0;
};

/// Parses "Compute (x o y) o z." / "Compute x o (y o z)." with an optional
/// hint sentence from the first line of a prompt.
SolveView parse_solve_prompt(std::string_view prompt);
/// Parses the solution embedded in a synthesis prompt.
SynthView parse_synthesis_prompt(std::string_view prompt);
bool is_synthesis_prompt(std::string_view prompt);

// ---------------------------------------------------------------------------
// Policy
// ---------------------------------------------------------------------------

struct Step {
  int state = 0;
  Tok token = Tok::A;
};

/// Tabular softmax policy: one logit row per context state, masked to the
/// tokens that are legal in that state.
class ToyPolicy {
 public:
  static constexpr int kSolveStates = 3 * 3 * 2 * 5 * 7;
  static constexpr int kSynthStates = 2 * 3 * 3 * 5 * 6;
  static constexpr int kStates = kSolveStates + kSynthStates;

  ToyPolicy();
  /// Initial "pretrained" policy: reading-order programs, the visible
  /// operator, and faithful copies in synthesis are preferred.
  static ToyPolicy base();

  static int solve_state(const SolveView& view, int position, std::optional<Tok> prev);
  static int synth_state(const SynthView& view, int position, std::optional<Tok> prev);
  static std::span<const Tok> legal(int state);

  /// Probabilities over the full vocabulary (zero for illegal tokens).
  std::array<double, kVocab> distribution(int state, double temperature = 1.0) const;
  double logprob(int state, Tok token, double temperature = 1.0) const;

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  double& logit(int state, Tok token) {
    return params_[static_cast<std::size_t>(state) * kVocab + static_cast<int>(token)];
  }

  nlohmann::json to_json() const;
  static ToyPolicy from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static ToyPolicy load(const std::string& path);

 private:
  std::vector<double> params_;
};

/// Prompt + completion text -> the (state, token) trajectory that produced it.
/// Throws InvalidInput for tokens outside the vocabulary or illegal in place.
std::vector<Step> trajectory(std::string_view prompt, std::string_view completion);

/// Exact log-softmax values of the completion's tokens under the policy.
std::vector<double> toy_logprobs(const ToyPolicy& policy, std::string_view prompt,
                                 std::string_view completion, double temperature = 1.0);

struct Sampled {
  Rollout rollout;
  std::vector<Step> steps;
};

/// Samples one completion. `rng` must be seeded by the caller.
Sampled sample_completion(const ToyPolicy& policy, std::string_view prompt,
                          double temperature, int max_tokens, std::mt19937_64& rng);

/// Objective of the drained batch at the policy's current parameters.
grpo::ObjectiveReport toy_objective(const ToyPolicy& policy,
                                    const std::vector<ExperienceSample>& samples,
                                    const RunConfig& config,
                                    const ToyPolicy* reference = nullptr);

/// Analytic gradient of toy_objective with respect to params(), through the
/// softmax Jacobian.
std::vector<double> toy_gradient(const ToyPolicy& policy,
                                 const std::vector<ExperienceSample>& samples,
                                 const RunConfig& config,
                                 const ToyPolicy* reference = nullptr);

/// One plain gradient-ascent step; returns the objective before the step.
grpo::ObjectiveReport toy_apply_gradient(ToyPolicy& policy,
                                         const std::vector<ExperienceSample>& samples,
                                         const RunConfig& config,
                                         const ToyPolicy* reference = nullptr);

/// Backend serving the toy policy. generate() is safe to call concurrently
/// between updates.
class ToyBackend : public Backend {
 public:
  explicit ToyBackend(ToyPolicy policy);

  std::vector<Rollout> generate(const GenerationRequest& request) override;
  std::string name() const override { return "toy"; }
  bool exact_entropy() const override { return true; }
  std::optional<grpo::ObjectiveReport> update(const std::vector<ExperienceSample>& batch,
                                              const RunConfig& config) override;

  const ToyPolicy& policy() const { return policy_; }
  ToyPolicy& policy() { return policy_; }
  const ToyPolicy& reference() const { return reference_; }

 private:
  ToyPolicy policy_;
  ToyPolicy reference_;
};

}  // namespace svs::toy
