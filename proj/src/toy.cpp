#include "svs/toy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>


namespace svs::toy {

namespace {

constexpr std::array<std::string_view, kVocab> kSpellings = {
    "a", "b", "c", "h", "+", "-", "*", "L", "R", "!", "."};

constexpr std::array<Tok, 4> kLead = {Tok::A, Tok::B, Tok::C, Tok::Copy};
constexpr std::array<Tok, 3> kRefs = {Tok::A, Tok::B, Tok::C};
constexpr std::array<Tok, 3> kOps = {Tok::Plus, Tok::Minus, Tok::Times};
constexpr std::array<Tok, 2> kShapes = {Tok::ShapeL, Tok::ShapeR};
constexpr std::array<Tok, 2> kFlags = {Tok::Hint, Tok::Plain};

constexpr std::array<std::pair<Op, Op>, 6> kTemplates = {{
    {Op::Plus, Op::Plus},
    {Op::Plus, Op::Minus},
    {Op::Minus, Op::Plus},
    {Op::Minus, Op::Minus},
    {Op::Times, Op::Plus},
    {Op::Times, Op::Minus},
}};

// Initial logit preferences of the base policy.
constexpr double kPreferReadingOrder = 2.0;
constexpr double kPreferVisibleOp = 2.0;
constexpr double kPreferShapeL = 1.0;
constexpr double kPreferCopy = 2.0;
constexpr double kPreferPlain = 1.0;

constexpr std::string_view kArrow = " => ";

int ref_index(Tok t) { return static_cast<int>(t) - static_cast<int>(Tok::A); }

Op op_of(Tok t) {
  switch (t) {
    case Tok::Minus: return Op::Minus;
    case Tok::Times: return Op::Times;
    default: return Op::Plus;
  }
}

Tok tok_of(Op op) {
  switch (op) {
    case Op::Minus: return Tok::Minus;
    case Op::Times: return Tok::Times;
    default: return Tok::Plus;
  }
}

std::optional<Op> op_from_char(char c) {
  switch (c) {
    case '+': return Op::Plus;
    case '-': return Op::Minus;
    case '*': return Op::Times;
    default: return std::nullopt;
  }
}

int solve_prev_index(std::optional<Tok> prev) {
  if (!prev) return 0;
  switch (*prev) {
    case Tok::A: return 1;
    case Tok::B: return 2;
    case Tok::C: return 3;
    case Tok::Plus: return 4;
    case Tok::Minus: return 5;
    case Tok::Times: return 6;
    default: return 0;
  }
}

int synth_prev_index(std::optional<Tok> prev) {
  if (!prev) return 0;
  switch (*prev) {
    case Tok::ShapeL: return 1;
    case Tok::ShapeR: return 2;
    case Tok::A: return 3;
    case Tok::B: return 4;
    case Tok::C: return 5;
    default: return 0;
  }
}

bool parse_long(std::string_view s, long& out) {
  if (s.empty()) return false;
  bool neg = false;
  std::size_t i = 0;
  if (s[0] == '-') {
    neg = true;
    i = 1;
  }
  if (i == s.size()) return false;
  long v = 0;
  for (; i < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
    if (v > 1'000'000'000L) return false;
  }
  out = neg ? -v : v;
  return true;
}

std::vector<std::string_view> split_spaces(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// Parses "(x o y) o z" or "x o (y o z)" followed by '.'.
bool parse_expression(std::string_view s, Shape& shape, Op& inner, Op& outer,
                      std::array<long, 3>& x) {
  if (s.empty() || s.back() != '.') return false;
  s.remove_suffix(1);
  auto parts = split_spaces(s);
  if (parts.size() != 5) return false;
  auto strip = [](std::string_view p, char lead, char trail) {
    if (lead && !p.empty() && p.front() == lead) p.remove_prefix(1);
    if (trail && !p.empty() && p.back() == trail) p.remove_suffix(1);
    return p;
  };
  auto op1 = parts[1].size() == 1 ? op_from_char(parts[1][0]) : std::nullopt;
  auto op2 = parts[3].size() == 1 ? op_from_char(parts[3][0]) : std::nullopt;
  if (!op1 || !op2) return false;
  if (parts[0].front() == '(' && parts[2].back() == ')') {
    shape = Shape::L;
    inner = *op1;
    outer = *op2;
    return parse_long(strip(parts[0], '(', 0), x[0]) &&
           parse_long(strip(parts[2], 0, ')'), x[1]) && parse_long(parts[4], x[2]);
  }
  if (parts[2].front() == '(' && parts[4].back() == ')') {
    shape = Shape::R;
    outer = *op1;
    inner = *op2;
    return parse_long(parts[0], x[0]) && parse_long(strip(parts[2], '(', 0), x[1]) &&
           parse_long(strip(parts[4], 0, ')'), x[2]);
  }
  return false;
}

long evaluate_program(const std::vector<Tok>& program,
                      const std::array<long, 3>& numbers) {
  long v = numbers[ref_index(program[0])];
  v = apply(op_of(program[1]), v, numbers[ref_index(program[2])]);
  return apply(op_of(program[3]), v, numbers[ref_index(program[4])]);
}

std::string render_solve_work(const std::vector<Tok>& tokens, const SolveView& view,
                              bool truncated) {
  if (truncated || view.shape == Shape::Unknown) return "?";
  if (tokens.size() == 1) {
    if (!view.hint) return "?";
    const auto h = std::to_string(*view.hint);
    return h + ". The answer is \\boxed{" + h + "}.";
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) os << ' ';
    if (i % 2 == 0) {
      os << view.numbers[ref_index(tokens[i])];
    } else {
      os << op_char(op_of(tokens[i]));
    }
  }
  const long v = evaluate_program(tokens, view.numbers);
  os << " = " << v << ". The answer is \\boxed{" << v << "}.";
  return os.str();
}

std::string render_synthesis(const std::vector<Tok>& tokens, const SynthView& view,
                             bool truncated) {
  if (truncated || !view.parsed) return "(no variant)";
  std::array<int, 3> x{};
  for (int i = 0; i < 3; ++i) {
    x[i] = static_cast<int>(view.numbers[ref_index(tokens[1 + i])]);
  }
  std::string stmt;
  if (tokens[0] == Tok::ShapeL) {
    stmt = render_statement(view.inner, view.outer, x);
  } else {
    stmt = "Compute " + std::to_string(x[0]) + " " + op_char(view.outer) + " (" +
           std::to_string(x[1]) + " " + op_char(view.inner) + " " +
           std::to_string(x[2]) + ").";
  }
  if (tokens[4] == Tok::Hint) {
    stmt += " Hint: the answer is " + std::to_string(view.value) + ".";
  }
  return "```text\n" + stmt + "\n```";
}

std::string join_tokens(const std::vector<Tok>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += spelling(tokens[i]);
  }
  return s;
}

}  // namespace

std::string_view spelling(Tok t) { return kSpellings[static_cast<int>(t)]; }

std::optional<Tok> parse_token(std::string_view s) {
  for (int i = 0; i < kVocab; ++i) {
    if (kSpellings[i] == s) return static_cast<Tok>(i);
  }
  return std::nullopt;
}

char op_char(Op op) {
  switch (op) {
    case Op::Minus: return '-';
    case Op::Times: return '*';
    default: return '+';
  }
}

long apply(Op op, long x, long y) {
  switch (op) {
    case Op::Minus: return x - y;
    case Op::Times: return x * y;
    default: return x + y;
  }
}

// ---- domain ----------------------------------------------------------------

Problem ToyProblem::to_problem(const std::string& id) const {
  return Problem::original(id, statement, std::to_string(gold));
}

std::span<const std::pair<Op, Op>> templates() { return kTemplates; }

std::string render_statement(Op inner, Op outer, std::array<int, 3> x) {
  return "Compute (" + std::to_string(x[0]) + " " + op_char(inner) + " " +
         std::to_string(x[1]) + ") " + op_char(outer) + " " + std::to_string(x[2]) +
         ".";
}

ToyProblem make_problem(int template_id, std::array<int, 3> operands) {
  if (template_id < 0 || template_id >= static_cast<int>(kTemplates.size())) {
    throw InvalidInput("unknown toy template " + std::to_string(template_id));
  }
  const auto [inner, outer] = kTemplates[template_id];
  ToyProblem p;
  p.template_id = template_id;
  p.operands = operands;
  p.statement = render_statement(inner, outer, operands);
  p.gold = apply(outer, apply(inner, operands[0], operands[1]), operands[2]);
  return p;
}

std::vector<ToyProblem> toy_domain_generate(std::uint64_t seed, int count) {
  if (count < 1) throw InvalidInput("toy_domain_generate: count must be >= 1");
  std::mt19937_64 rng(derive_seed(seed, "toy-domain"));
  auto pick = [&](int n) {
    return std::min(n - 1, static_cast<int>(unit_from_bits(rng()) * n));
  };
  std::vector<ToyProblem> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int t = pick(static_cast<int>(kTemplates.size()));
    std::array<int, 3> x{1 + pick(9), 1 + pick(9), 1 + pick(9)};
    out.push_back(make_problem(t, x));
  }
  return out;
}

std::vector<Problem> toy_dataset(std::uint64_t seed, int count,
                                 const std::string& id_prefix) {
  std::vector<Problem> out;
  const auto problems = toy_domain_generate(seed, count);
  for (std::size_t i = 0; i < problems.size(); ++i) {
    out.push_back(problems[i].to_problem(id_prefix + std::to_string(i)));
  }
  return out;
}

std::vector<Problem> toy_training_set(const RunConfig& config) {
  return toy_dataset(derive_seed(config.seed, "toy/train"), config.toy_problems, "toy-");
}

std::vector<Problem> toy_heldout_set(const RunConfig& config) {
  if (config.toy_heldout == 0) return {};
  return toy_dataset(derive_seed(config.seed, "toy/heldout"), config.toy_heldout,
                     "toy-heldout-");
}

// ---- prompt views ----------------------------------------------------------

bool is_synthesis_prompt(std::string_view prompt) {
  return prompt.find("<response>") != std::string_view::npos &&
         prompt.find("</response>") != std::string_view::npos;
}

SolveView parse_solve_prompt(std::string_view prompt) {
  SolveView view;
  std::string_view line = prompt.substr(0, prompt.find('\n'));
  constexpr std::string_view kCompute = "Compute ";
  if (line.substr(0, kCompute.size()) != kCompute) return view;
  line.remove_prefix(kCompute.size());
  constexpr std::string_view kHint = " Hint: the answer is ";
  std::optional<long> hint;
  if (auto pos = line.find(kHint); pos != std::string_view::npos) {
    std::string_view h = line.substr(pos + kHint.size());
    if (h.empty() || h.back() != '.') return view;
    h.remove_suffix(1);
    long v = 0;
    if (!parse_long(h, v)) return view;
    hint = v;
    line = line.substr(0, pos);
  }
  Shape shape = Shape::Unknown;
  Op inner = Op::Plus, outer = Op::Plus;
  std::array<long, 3> x{};
  if (!parse_expression(line, shape, inner, outer, x)) return view;
  view.shape = shape;
  view.outer = outer;
  view.numbers = x;
  view.hint = hint;
  return view;
}

SynthView parse_synthesis_prompt(std::string_view prompt) {
  SynthView view;
  const auto open = prompt.find("<response>");
  const auto close = prompt.find("</response>");
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    return view;
  }
  std::string_view solution = prompt.substr(open + 10, close - open - 10);
  const auto arrow = solution.find(kArrow);
  if (arrow == std::string_view::npos) return view;
  std::string_view work = solution.substr(arrow + kArrow.size());
  work = work.substr(0, work.find('\n'));
  auto parts = split_spaces(work);
  // x o y o z = v. ...
  if (parts.size() < 7 || parts[5] != "=") return view;
  std::string_view value = parts[6];
  if (value.empty() || value.back() != '.') return view;
  value.remove_suffix(1);
  auto op1 = parts[1].size() == 1 ? op_from_char(parts[1][0]) : std::nullopt;
  auto op2 = parts[3].size() == 1 ? op_from_char(parts[3][0]) : std::nullopt;
  if (!op1 || !op2) return view;
  if (!parse_long(parts[0], view.numbers[0]) || !parse_long(parts[2], view.numbers[1]) ||
      !parse_long(parts[4], view.numbers[2]) || !parse_long(value, view.value)) {
    return view;
  }
  view.inner = *op1;
  view.outer = *op2;
  view.parsed = true;
  return view;
}

// ---- policy ----------------------------------------------------------------

ToyPolicy::ToyPolicy() : params_(static_cast<std::size_t>(kStates) * kVocab, 0.0) {}

int ToyPolicy::solve_state(const SolveView& view, int position, std::optional<Tok> prev) {
  const int shape = static_cast<int>(view.shape);
  const int outer = view.shape == Shape::Unknown ? 0 : static_cast<int>(view.outer);
  const int hint = view.hint ? 1 : 0;
  return (((shape * 3 + outer) * 2 + hint) * 5 + position) * 7 + solve_prev_index(prev);
}

int ToyPolicy::synth_state(const SynthView& view, int position, std::optional<Tok> prev) {
  const int parsed = view.parsed ? 1 : 0;
  const int inner = view.parsed ? static_cast<int>(view.inner) : 0;
  const int outer = view.parsed ? static_cast<int>(view.outer) : 0;
  return kSolveStates +
         ((((parsed * 3 + inner) * 3 + outer) * 5 + position) * 6 +
          synth_prev_index(prev));
}

std::span<const Tok> ToyPolicy::legal(int state) {
  if (state < kSolveStates) {
    const int position = (state / 7) % 5;
    switch (position) {
      case 0: return kLead;
      case 1:
      case 3: return kOps;
      default: return kRefs;
    }
  }
  const int position = ((state - kSolveStates) / 6) % 5;
  switch (position) {
    case 0: return kShapes;
    case 4: return kFlags;
    default: return kRefs;
  }
}

ToyPolicy ToyPolicy::base() {
  ToyPolicy p;
  for (int shape = 0; shape < 3; ++shape) {
    for (int outer = 0; outer < 3; ++outer) {
      for (int hint = 0; hint < 2; ++hint) {
        SolveView v;
        v.shape = static_cast<Shape>(shape);
        v.outer = static_cast<Op>(outer);
        if (hint) v.hint = 0;
        for (int prev = 0; prev < 7; ++prev) {
          // prev index 0 means "no previous token"; the rest map onto a..*.
          static constexpr std::array<std::optional<Tok>, 7> kPrev = {
              std::nullopt, Tok::A, Tok::B, Tok::C, Tok::Plus, Tok::Minus, Tok::Times};
          p.logit(solve_state(v, 0, kPrev[prev]), Tok::A) += kPreferReadingOrder;
          p.logit(solve_state(v, 2, kPrev[prev]), Tok::B) += kPreferReadingOrder;
          p.logit(solve_state(v, 4, kPrev[prev]), Tok::C) += kPreferReadingOrder;
          if (v.shape != Shape::Unknown) {
            p.logit(solve_state(v, 3, kPrev[prev]), tok_of(v.outer)) += kPreferVisibleOp;
          }
        }
      }
    }
  }
  for (int parsed = 0; parsed < 2; ++parsed) {
    for (int inner = 0; inner < 3; ++inner) {
      for (int outer = 0; outer < 3; ++outer) {
        SynthView v;
        v.parsed = parsed == 1;
        v.inner = static_cast<Op>(inner);
        v.outer = static_cast<Op>(outer);
        static constexpr std::array<std::optional<Tok>, 6> kPrev = {
            std::nullopt, Tok::ShapeL, Tok::ShapeR, Tok::A, Tok::B, Tok::C};
        for (const auto& prev : kPrev) {
          p.logit(synth_state(v, 0, prev), Tok::ShapeL) += kPreferShapeL;
          p.logit(synth_state(v, 1, prev), Tok::A) += kPreferCopy;
          p.logit(synth_state(v, 2, prev), Tok::B) += kPreferCopy;
          p.logit(synth_state(v, 3, prev), Tok::C) += kPreferCopy;
          p.logit(synth_state(v, 4, prev), Tok::Plain) += kPreferPlain;
        }
      }
    }
  }
  return p;
}

std::array<double, kVocab> ToyPolicy::distribution(int state, double temperature) const {
  std::array<double, kVocab> out{};
  const auto allowed = legal(state);
  const double* row = params_.data() + static_cast<std::size_t>(state) * kVocab;
  double mx = -INFINITY;
  for (Tok t : allowed) mx = std::max(mx, row[static_cast<int>(t)] / temperature);
  double z = 0.0;
  for (Tok t : allowed) {
    const double e = std::exp(row[static_cast<int>(t)] / temperature - mx);
    out[static_cast<int>(t)] = e;
    z += e;
  }
  for (Tok t : allowed) out[static_cast<int>(t)] /= z;
  return out;
}

double ToyPolicy::logprob(int state, Tok token, double temperature) const {
  const auto allowed = legal(state);
  if (std::find(allowed.begin(), allowed.end(), token) == allowed.end()) {
    throw InvalidInput("token '" + std::string(spelling(token)) +
                       "' is not legal in this state");
  }
  const double* row = params_.data() + static_cast<std::size_t>(state) * kVocab;
  double mx = -INFINITY;
  for (Tok t : allowed) mx = std::max(mx, row[static_cast<int>(t)] / temperature);
  double z = 0.0;
  for (Tok t : allowed) z += std::exp(row[static_cast<int>(t)] / temperature - mx);
  return row[static_cast<int>(token)] / temperature - mx - std::log(z);
}

nlohmann::json ToyPolicy::to_json() const {
  return nlohmann::json{{"vocabulary", kVocabularyVersion},
                        {"states", kStates},
                        {"vocab", kVocab},
                        {"params", params_}};
}

ToyPolicy ToyPolicy::from_json(const nlohmann::json& j) {
  if (j.value("vocabulary", std::string{}) != kVocabularyVersion) {
    throw InvalidInput("toy policy was saved with a different vocabulary version");
  }
  ToyPolicy p;
  auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != p.params_.size()) {
    throw InvalidInput("toy policy parameter count mismatch");
  }
  p.params_ = std::move(params);
  return p;
}

void ToyPolicy::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write policy '" + path + "'");
  out << to_json().dump() << '\n';
}

ToyPolicy ToyPolicy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open policy '" + path + "'");
  return from_json(nlohmann::json::parse(in));
}

// ---- trajectories ----------------------------------------------------------

std::vector<Step> trajectory(std::string_view prompt, std::string_view completion) {
  const auto arrow = completion.find(kArrow);
  std::string_view head =
      arrow == std::string_view::npos ? completion : completion.substr(0, arrow);
  std::vector<Tok> tokens;
  for (auto piece : split_spaces(head)) {
    auto t = parse_token(piece);
    if (!t) {
      throw InvalidInput("token '" + std::string(piece) + "' is not in the toy vocabulary");
    }
    tokens.push_back(*t);
  }
  std::vector<Step> steps;
  steps.reserve(tokens.size());
  std::optional<Tok> prev;
  if (is_synthesis_prompt(prompt)) {
    const SynthView view = parse_synthesis_prompt(prompt);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i >= 5) throw InvalidInput("synthesis completion longer than 5 tokens");
      steps.push_back({ToyPolicy::synth_state(view, static_cast<int>(i), prev), tokens[i]});
      prev = tokens[i];
    }
  } else {
    const SolveView view = parse_solve_prompt(prompt);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i >= 5 || (i > 0 && tokens[0] == Tok::Copy)) {
        throw InvalidInput("solve completion has too many tokens");
      }
      steps.push_back({ToyPolicy::solve_state(view, static_cast<int>(i), prev), tokens[i]});
      prev = tokens[i];
    }
  }
  for (const auto& s : steps) {
    const auto allowed = ToyPolicy::legal(s.state);
    if (std::find(allowed.begin(), allowed.end(), s.token) == allowed.end()) {
      throw InvalidInput("token '" + std::string(spelling(s.token)) +
                         "' is not legal at its position");
    }
  }
  return steps;
}

std::vector<double> toy_logprobs(const ToyPolicy& policy, std::string_view prompt,
                                 std::string_view completion, double temperature) {
  std::vector<double> out;
  for (const auto& s : trajectory(prompt, completion)) {
    out.push_back(policy.logprob(s.state, s.token, temperature));
  }
  return out;
}

Sampled sample_completion(const ToyPolicy& policy, std::string_view prompt,
                          double temperature, int max_tokens, std::mt19937_64& rng) {
  Sampled out;
  std::vector<Tok> tokens;
  std::optional<Tok> prev;
  const bool synth = is_synthesis_prompt(prompt);
  SolveView solve_view;
  SynthView synth_view;
  if (synth) {
    synth_view = parse_synthesis_prompt(prompt);
  } else {
    solve_view = parse_solve_prompt(prompt);
  }
  bool truncated = false;
  for (int pos = 0; pos < 5; ++pos) {
    if (static_cast<int>(tokens.size()) >= max_tokens) {
      truncated = true;
      break;
    }
    const int state = synth ? ToyPolicy::synth_state(synth_view, pos, prev)
                            : ToyPolicy::solve_state(solve_view, pos, prev);
    const auto dist = policy.distribution(state, temperature);
    const double u = unit_from_bits(rng());
    double acc = 0.0;
    Tok chosen = ToyPolicy::legal(state).back();
    for (Tok t : ToyPolicy::legal(state)) {
      acc += dist[static_cast<int>(t)];
      if (u < acc) {
        chosen = t;
        break;
      }
    }
    tokens.push_back(chosen);
    out.steps.push_back({state, chosen});
    out.rollout.token_logprobs.push_back(policy.logprob(state, chosen, temperature));
    out.rollout.token_entropies.push_back(grpo::entropy_of(dist));
    prev = chosen;
    if (!synth && pos == 0 && chosen == Tok::Copy) break;
  }
  out.rollout.finish_reason = truncated ? FinishReason::Length : FinishReason::Stop;
  const std::string work = synth ? render_synthesis(tokens, synth_view, truncated)
                                 : render_solve_work(tokens, solve_view, truncated);
  out.rollout.text = join_tokens(tokens) + std::string(kArrow) + work;
  return out;
}

// ---- optimisation ----------------------------------------------------------

namespace {

struct PreparedBatch {
  grpo::TokenBatch batch;
  std::vector<std::vector<Step>> steps;
};

PreparedBatch prepare(const ToyPolicy& policy, const std::vector<ExperienceSample>& samples,
                      const RunConfig& config, const ToyPolicy* reference) {
  PreparedBatch out;
  const auto groups = group_ids(samples);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    auto steps = trajectory(s.prompt, s.response);
    if (steps.size() != s.token_logprobs_old.size()) {
      throw InvalidInput("sample " + std::to_string(i) +
                         ": old logprobs do not match the completion's tokens");
    }
    grpo::TokenSample ts;
    ts.advantage = s.advantage;
    ts.logprobs_old = s.token_logprobs_old;
    ts.group = groups[i];
    for (const auto& st : steps) {
      ts.logprobs_new.push_back(policy.logprob(st.state, st.token, config.temperature));
      if (config.beta > 0.0 && reference) {
        ts.logprobs_ref.push_back(reference->logprob(st.state, st.token, config.temperature));
      }
    }
    out.batch.samples.push_back(std::move(ts));
    out.steps.push_back(std::move(steps));
  }
  return out;
}

grpo::ObjectiveParams objective_params(const RunConfig& config) {
  return {config.eps_lo, config.eps_hi, config.beta, config.loss_mode};
}

}  // namespace

grpo::ObjectiveReport toy_objective(const ToyPolicy& policy,
                                    const std::vector<ExperienceSample>& samples,
                                    const RunConfig& config, const ToyPolicy* reference) {
  if (samples.empty()) return {};
  const auto prepared = prepare(policy, samples, config, reference);
  return grpo::clipped_objective(prepared.batch, objective_params(config));
}

std::vector<double> toy_gradient(const ToyPolicy& policy,
                                 const std::vector<ExperienceSample>& samples,
                                 const RunConfig& config, const ToyPolicy* reference) {
  std::vector<double> grad(policy.params().size(), 0.0);
  if (samples.empty()) return grad;
  const auto prepared = prepare(policy, samples, config, reference);
  const auto dlogp =
      grpo::objective_logprob_gradient(prepared.batch, objective_params(config));
  const double inv_t = 1.0 / config.temperature;
  for (std::size_t i = 0; i < prepared.steps.size(); ++i) {
    for (std::size_t t = 0; t < prepared.steps[i].size(); ++t) {
      const double g = dlogp[i][t];
      if (g == 0.0) continue;
      const auto& st = prepared.steps[i][t];
      const auto dist = policy.distribution(st.state, config.temperature);
      double* row = grad.data() + static_cast<std::size_t>(st.state) * kVocab;
      // d log pi(y|s) / d logit_v = (1[v = y] - pi(v|s)) / T
      for (Tok v : ToyPolicy::legal(st.state)) {
        const int vi = static_cast<int>(v);
        row[vi] += g * ((v == st.token ? 1.0 : 0.0) - dist[vi]) * inv_t;
      }
    }
  }
  return grad;
}

grpo::ObjectiveReport toy_apply_gradient(ToyPolicy& policy,
                                         const std::vector<ExperienceSample>& samples,
                                         const RunConfig& config, const ToyPolicy* reference) {
  if (samples.empty()) return {};
  const auto report = toy_objective(policy, samples, config, reference);
  const auto grad = toy_gradient(policy, samples, config, reference);
  auto params = policy.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] += config.learning_rate * grad[i];
  }
  return report;
}

// ---- backend ---------------------------------------------------------------

ToyBackend::ToyBackend(ToyPolicy policy) : policy_(policy), reference_(std::move(policy)) {}

std::vector<Rollout> ToyBackend::generate(const GenerationRequest& request) {
  request.validate();
  const std::uint64_t base = request.seed ? *request.seed : fnv1a64(request.prompt);
  std::vector<Rollout> out;
  out.reserve(request.n);
  for (int i = 0; i < request.n; ++i) {
    std::mt19937_64 rng(derive_seed(base, "sample/" + std::to_string(i)));
    out.push_back(sample_completion(policy_, request.prompt, request.temperature,
                                    request.max_tokens, rng)
                      .rollout);
  }
  return out;
}

std::optional<grpo::ObjectiveReport> ToyBackend::update(
    const std::vector<ExperienceSample>& batch, const RunConfig& config) {
  return toy_apply_gradient(policy_, batch, config, &reference_);
}

}  // namespace svs::toy
