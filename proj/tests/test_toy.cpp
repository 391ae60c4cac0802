#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "svs/svs.hpp"
#include "svs/toy.hpp"
#include "svs/verifier.hpp"

using namespace svs;
using namespace svs::toy;

namespace {

const std::string kPrompt = build_solve_prompt(make_problem(4, {3, 4, 5}).to_problem("t"));

// Samples from `policy` on a few problems and turns them into a batch with
// random advantages, grouped by prompt.
std::vector<ExperienceSample> random_samples(const ToyPolicy& policy, std::mt19937_64& rng,
                                             int problems, int per_problem) {
  std::normal_distribution<double> adv(0.0, 1.0);
  std::vector<ExperienceSample> out;
  const auto ds = toy_dataset(rng(), problems, "g");
  for (const auto& p : ds) {
    const std::string prompt = build_solve_prompt(p);
    for (int i = 0; i < per_problem; ++i) {
      auto s = sample_completion(policy, prompt, 1.0, 16, rng);
      ExperienceSample e;
      e.kind = SampleKind::OriginalSolve;
      e.prompt = prompt;
      e.response = s.rollout.text;
      e.token_logprobs_old = s.rollout.token_logprobs;
      e.advantage = adv(rng);
      e.problem_id = p.id;
      out.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("uniform logits give -log of the legal set size") {
  ToyPolicy p;
  const auto lps = toy_logprobs(p, kPrompt, "a * b + c");
  REQUIRE(lps.size() == 5);
  CHECK(lps[0] == doctest::Approx(-std::log(4.0)));  // a b c h
  CHECK(lps[1] == doctest::Approx(-std::log(3.0)));  // + - *
  CHECK(lps[2] == doctest::Approx(-std::log(3.0)));  // a b c
  const auto copy = toy_logprobs(p, kPrompt, "h => ?");
  REQUIRE(copy.size() == 1);
  CHECK(copy[0] == doctest::Approx(-std::log(4.0)));
}

TEST_CASE("a dominant logit gives logprob near zero") {
  ToyPolicy p;
  const auto view = parse_solve_prompt(kPrompt);
  const int s = ToyPolicy::solve_state(view, 0, std::nullopt);
  p.logit(s, Tok::B) = 60.0;
  CHECK(p.logprob(s, Tok::B) > -1e-20);
  CHECK(p.logprob(s, Tok::A) < -59.0);
  CHECK_THROWS_AS(p.logprob(s, Tok::Plus), InvalidInput);
}

TEST_CASE("distribution matches a brute-force masked softmax") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 3.0);
  ToyPolicy p;
  for (auto& v : p.params()) v = n(rng);
  for (double temp : {1.0, 0.7, 1.5}) {
    for (int s = 0; s < ToyPolicy::kStates; s += 7) {
      const auto legal = ToyPolicy::legal(s);
      double z = 0;
      for (Tok t : legal) z += std::exp(p.logit(s, t) / temp);
      const auto d = p.distribution(s, temp);
      double total = 0;
      for (int v = 0; v < kVocab; ++v) {
        const auto t = static_cast<Tok>(v);
        const bool ok = std::find(legal.begin(), legal.end(), t) != legal.end();
        const double want = ok ? std::exp(p.logit(s, t) / temp) / z : 0.0;
        CHECK(std::abs(d[v] - want) < 1e-12);
        if (ok) CHECK(std::abs(p.logprob(s, t, temp) - std::log(want)) < 1e-12);
        total += d[v];
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("trajectory rejects unknown and misplaced tokens") {
  CHECK_THROWS_AS(trajectory(kPrompt, "a * z + c"), InvalidInput);
  CHECK_THROWS_AS(trajectory(kPrompt, "a b b + c"), InvalidInput);
  CHECK_THROWS_AS(trajectory(kPrompt, "h a"), InvalidInput);
  CHECK_THROWS_AS(trajectory(kPrompt, "a * b + c * a"), InvalidInput);
  CHECK(trajectory(kPrompt, "a * b").size() == 3);
}

TEST_CASE("state spaces have the documented sizes") {
  CHECK(ToyPolicy::kSolveStates == 630);
  CHECK(ToyPolicy::kSynthStates == 540);
  std::vector<bool> hit(ToyPolicy::kStates, false);
  static constexpr std::array<std::optional<Tok>, 7> kSolvePrev = {
      std::nullopt, Tok::A, Tok::B, Tok::C, Tok::Plus, Tok::Minus, Tok::Times};
  for (int shape = 0; shape < 3; ++shape)
    for (int outer = 0; outer < 3; ++outer)
      for (int hint = 0; hint < 2; ++hint)
        for (int pos = 0; pos < 5; ++pos)
          for (auto prev : kSolvePrev) {
            SolveView v;
            v.shape = static_cast<Shape>(shape);
            v.outer = static_cast<Op>(outer);
            if (hint) v.hint = 1;
            hit[ToyPolicy::solve_state(v, pos, prev)] = true;
          }
  static constexpr std::array<std::optional<Tok>, 6> kSynthPrev = {
      std::nullopt, Tok::ShapeL, Tok::ShapeR, Tok::A, Tok::B, Tok::C};
  for (int parsed = 0; parsed < 2; ++parsed)
    for (int inner = 0; inner < 3; ++inner)
      for (int outer = 0; outer < 3; ++outer)
        for (int pos = 0; pos < 5; ++pos)
          for (auto prev : kSynthPrev) {
            SynthView v;
            v.parsed = parsed;
            v.inner = static_cast<Op>(inner);
            v.outer = static_cast<Op>(outer);
            hit[ToyPolicy::synth_state(v, pos, prev)] = true;
          }
  // Unknown-shape solve states ignore the outer operator and unparsed
  // synthesis states ignore both operators, so those slots stay unused:
  // 2*3*2*5*7 + 2*5*7 solve states, 3*3*5*6 + 5*6 synthesis states.
  int used = 0;
  for (bool h : hit) used += h;
  CHECK(used == 420 + 70 + 270 + 30);
}

TEST_CASE("toy domain is deterministic and its gold answers re-evaluate") {
  const auto a = toy_domain_generate(9, 500);
  const auto b = toy_domain_generate(9, 500);
  const auto c = toy_domain_generate(10, 500);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].statement == b[i].statement);
    differs |= a[i].statement != c[i].statement;
    const auto [inner, outer] = templates()[a[i].template_id];
    const auto& x = a[i].operands;
    for (int v : x) CHECK((v >= 1 && v <= 9));
    CHECK(a[i].gold == apply(outer, apply(inner, x[0], x[1]), x[2]));
    CHECK(std::abs(a[i].gold) <= 90);
    const auto view = parse_solve_prompt(a[i].statement);
    CHECK(view.shape == Shape::L);
    CHECK(view.outer == outer);
  }
  CHECK(differs);
  CHECK_THROWS_AS(make_problem(6, {1, 2, 3}), InvalidInput);
  CHECK_THROWS_AS(toy_domain_generate(1, 0), InvalidInput);
}

TEST_CASE("solve completions are verifiable") {
  const auto p = make_problem(4, {3, 4, 5});  // (3 * 4) + 5
  const std::string prompt = build_solve_prompt(p.to_problem("x"));
  ToyPolicy policy;
  const auto view = parse_solve_prompt(prompt);
  // Force "a * b + c".
  const std::array<Tok, 5> want = {Tok::A, Tok::Times, Tok::B, Tok::Plus, Tok::C};
  std::optional<Tok> prev;
  for (int i = 0; i < 5; ++i) {
    policy.logit(ToyPolicy::solve_state(view, i, prev), want[i]) = 80;
    prev = want[i];
  }
  std::mt19937_64 rng(1);
  const auto s = sample_completion(policy, prompt, 1.0, 64, rng);
  CHECK(s.rollout.text == "a * b + c => 3 * 4 + 5 = 17. The answer is \\boxed{17}.");
  CHECK(verifier::correctness_reward(s.rollout.text, std::to_string(p.gold)) == 1.0);
  CHECK(s.rollout.token_entropies.size() == 5);

  const auto cut = sample_completion(policy, prompt, 1.0, 3, rng);
  CHECK(cut.rollout.finish_reason == FinishReason::Length);
  CHECK(cut.rollout.text == "a * b => ?");
  CHECK(cut.rollout.token_logprobs.size() == 3);
}

TEST_CASE("synthesis completion renders a fenced variant") {
  const std::string prompt =
      build_synthesis_prompt("a * b + c => 3 * 4 + 5 = 17. The answer is \\boxed{17}.");
  const auto view = parse_synthesis_prompt(prompt);
  REQUIRE(view.parsed);
  CHECK(view.inner == Op::Times);
  CHECK(view.value == 17);
  ToyPolicy policy;
  const std::array<Tok, 5> want = {Tok::ShapeR, Tok::C, Tok::A, Tok::B, Tok::Hint};
  std::optional<Tok> prev;
  for (int i = 0; i < 5; ++i) {
    policy.logit(ToyPolicy::synth_state(view, i, prev), want[i]) = 80;
    prev = want[i];
  }
  std::mt19937_64 rng(2);
  const auto s = sample_completion(policy, prompt, 1.0, 64, rng);
  CHECK(s.rollout.text ==
        "R c a b ! => ```text\nCompute 5 + (3 * 4). Hint: the answer is 17.\n```");
  CHECK(extract_synthetic_problem(s.rollout.text) ==
        "Compute 5 + (3 * 4). Hint: the answer is 17.");
  CHECK(toy_logprobs(policy, prompt, s.rollout.text) == s.rollout.token_logprobs);
}

TEST_CASE("sampling frequencies match the distribution") {
  std::mt19937_64 init(8);
  std::normal_distribution<double> n(0.0, 1.0);
  ToyPolicy p;
  for (auto& v : p.params()) v = n(init);
  const auto view = parse_solve_prompt(kPrompt);
  const int s = ToyPolicy::solve_state(view, 0, std::nullopt);
  const auto d = p.distribution(s);
  std::array<int, kVocab> counts{};
  std::mt19937_64 rng(12345);
  const int N = 100000;
  for (int i = 0; i < N; ++i) {
    const auto out = sample_completion(p, kPrompt, 1.0, 1, rng);
    counts[static_cast<int>(out.steps[0].token)]++;
  }
  double chi2 = 0;
  for (Tok t : ToyPolicy::legal(s)) {
    const double e = N * d[static_cast<int>(t)];
    chi2 += (counts[static_cast<int>(t)] - e) * (counts[static_cast<int>(t)] - e) / e;
  }
  // 3 degrees of freedom, 99.9th percentile.
  CHECK(chi2 < 16.27);
}

TEST_CASE("analytic gradient matches finite differences") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 0.3);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    RunConfig cfg;
    cfg.beta = trial % 2 ? 0.05 : 0.0;
    cfg.loss_mode = trial % 3 == 0 ? LossMode::SequenceMean : LossMode::TokenMean;
    cfg.temperature = trial % 4 == 1 ? 0.8 : 1.0;
    const ToyPolicy reference = ToyPolicy::base();
    ToyPolicy old = reference;
    const auto samples = random_samples(old, rng, 3, 4);
    ToyPolicy policy = old;
    for (auto& v : policy.params()) v += n(rng);
    const auto grad = toy_gradient(policy, samples, cfg, &reference);

    // Directional derivatives along random directions.
    for (int dir = 0; dir < 3; ++dir) {
      std::vector<double> d(grad.size());
      for (auto& v : d) v = n(rng);
      double an = 0;
      for (std::size_t i = 0; i < d.size(); ++i) an += grad[i] * d[i];
      const double h = 1e-6;
      ToyPolicy plus = policy, minus = policy;
      for (std::size_t i = 0; i < d.size(); ++i) {
        plus.params()[i] += h * d[i];
        minus.params()[i] -= h * d[i];
      }
      const double fd = (toy_objective(plus, samples, cfg, &reference).objective_value -
                         toy_objective(minus, samples, cfg, &reference).objective_value) /
                        (2 * h);
      CHECK(std::abs(fd - an) <= 1e-5 * std::max(1e-3, std::abs(an)));
      ++checked;
    }
  }
  CHECK(checked == 60);
}

TEST_CASE("empty batch leaves parameters unchanged") {
  ToyPolicy p = ToyPolicy::base();
  const auto before = std::vector<double>(p.params().begin(), p.params().end());
  RunConfig cfg;
  const auto rep = toy_apply_gradient(p, {}, cfg);
  CHECK(rep.token_count == 0);
  CHECK(std::equal(before.begin(), before.end(), p.params().begin()));
}

TEST_CASE("a positive advantage raises the sampled tokens' probabilities") {
  ToyPolicy p = ToyPolicy::base();
  std::mt19937_64 rng(6);
  auto s = sample_completion(p, kPrompt, 1.0, 16, rng);
  ExperienceSample good;
  good.prompt = kPrompt;
  good.response = s.rollout.text;
  good.token_logprobs_old = s.rollout.token_logprobs;
  good.advantage = 1.0;
  auto bad = good;
  bad.advantage = -1.0;
  RunConfig cfg;
  cfg.learning_rate = 0.1;

  ToyPolicy up = p, down = p;
  toy_apply_gradient(up, {good}, cfg);
  toy_apply_gradient(down, {bad}, cfg);
  const auto before = toy_logprobs(p, kPrompt, s.rollout.text);
  const auto after_up = toy_logprobs(up, kPrompt, s.rollout.text);
  const auto after_down = toy_logprobs(down, kPrompt, s.rollout.text);
  for (std::size_t t = 0; t < before.size(); ++t) {
    CHECK(after_up[t] > before[t]);
    CHECK(after_down[t] < before[t]);
  }
}

TEST_CASE("distributions stay normalized through training") {
  RunConfig cfg;
  cfg.learning_rate = 5.0;
  ToyPolicy p = ToyPolicy::base();
  std::mt19937_64 rng(77);
  for (int step = 0; step < 20; ++step) {
    const auto batch = random_samples(p, rng, 4, 4);
    toy_apply_gradient(p, batch, cfg);
  }
  for (int s = 0; s < ToyPolicy::kStates; ++s) {
    const auto d = p.distribution(s);
    double total = 0;
    for (double v : d) {
      CHECK(v >= 0.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("policy save and load") {
  ToyPolicy p = ToyPolicy::base();
  p.params()[17] = 0.1234567890123;
  const auto path = (std::filesystem::temp_directory_path() / "svs_toy_policy.json").string();
  p.save(path);
  const auto q = ToyPolicy::load(path);
  std::remove(path.c_str());
  CHECK(std::equal(p.params().begin(), p.params().end(), q.params().begin()));

  auto j = p.to_json();
  j["vocabulary"] = "other";
  CHECK_THROWS_AS(ToyPolicy::from_json(j), InvalidInput);
}

TEST_CASE("toy backend is reproducible under a seed") {
  ToyBackend a(ToyPolicy::base()), b(ToyPolicy::base());
  GenerationRequest r;
  r.prompt = kPrompt;
  r.n = 8;
  r.seed = 99;
  const auto x = a.generate(r), y = b.generate(r);
  REQUIRE(x.size() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(x[i].text == y[i].text);
    CHECK(x[i].token_logprobs == y[i].token_logprobs);
    CHECK(toy_logprobs(a.policy(), kPrompt, x[i].text) == x[i].token_logprobs);
  }
  r.seed = 100;
  const auto z = a.generate(r);
  bool differs = false;
  for (int i = 0; i < 8; ++i) differs |= z[i].text != x[i].text;
  CHECK(differs);
  CHECK(a.exact_entropy());
}
